//! Grids, nearest-neighbour projection and per-cell statistics.
//!
//! Four integration backends compute the cell integrals:
//! `exact1d` (closed-form interval moments), `monte_carlo` (seeded samples,
//! with standard errors), `atoms` (exact sums over an empirical measure) and
//! `planar` (convex polygon cells in the plane, integrated by Gauss rules).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist2, Distribution, Family, Kind};
use crate::quadrature::gauss_legendre;
use crate::rng::{stream_rng, Stream};

/// An ordered tuple of pairwise distinct points in `R^d`.
///
/// Index `i` keeps its identity across iterations: the point at index `i`
/// of the next grid is the centroid of cell `i` of this one.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    coords: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Config("a grid needs at least one point of positive dimension".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("grid points must share a dimension".into()));
        }
        Self::from_flat(dim, points.into_iter().flatten().collect())
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::Config("flat grid length must be a positive multiple of dim".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid coordinates must be finite".into()));
        }
        let grid = Grid { dim, coords };
        if let Some((i, j)) = grid.first_duplicate() {
            return Err(Error::DuplicatePoint(i, j));
        }
        Ok(grid)
    }

    /// One-dimensional grid from scalars.
    pub fn line(points: &[f64]) -> Result<Self> {
        Self::from_flat(1, points.to_vec())
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// The grid with `p` appended.
    pub fn with_point(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.dim {
            return Err(Error::Config("appended point has the wrong dimension".into()));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(p);
        Self::from_flat(self.dim, coords)
    }

    /// Grid with every coordinate vector mapped through `f`.
    pub fn map_points<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Result<Self> {
        let pts: Vec<Vec<f64>> = self.points().map(f).collect();
        Self::new(pts)
    }

    fn first_duplicate(&self) -> Option<(usize, usize)> {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order.windows(2).find_map(|w| {
            (self.point(w[0]) == self.point(w[1])).then(|| (w[0].min(w[1]), w[0].max(w[1])))
        })
    }
}

/// How cell integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// Closed-form interval moments; one-dimensional analytic laws.
    Exact1d,
    /// Nearest-neighbour accumulation over seeded samples.
    MonteCarlo { samples: usize, seed: u64 },
    /// Exact weighted sums over the atoms of an empirical measure.
    Atoms,
    /// Convex polygon cells in the plane with Gauss–Legendre rules of the given order.
    Planar { order: usize },
}

impl Backend {
    pub fn is_exact(&self) -> bool {
        !matches!(self, Backend::MonteCarlo { .. })
    }

    /// Natural exact backend for a law, when there is one.
    pub fn exact_for(dist: &Distribution) -> Option<Backend> {
        match (dist.kind(), dist.dim()) {
            (Kind::Analytic1d, _) => Some(Backend::Exact1d),
            (Kind::Empirical, _) => Some(Backend::Atoms),
            (Kind::AnalyticNd, 2) => Some(Backend::Planar { order: 8 }),
            _ => None,
        }
    }
}

/// Standard errors attached to Monte Carlo cell statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStdErr {
    pub mass: f64,
    pub centroid: Vec<f64>,
    pub second_moment: f64,
}

/// Statistics of one Voronoi cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mass: f64,
    /// `None` marks an empty cell.
    pub centroid: Option<Vec<f64>>,
    /// `∫_{C_i} |ξ - x_i|^2 μ(dξ)`.
    pub second_moment: f64,
    pub std_err: Option<CellStdErr>,
}

/// Index of the nearest grid point; ties go to the lowest index.
pub fn nearest_index(xi: &[f64], grid: &Grid) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in grid.points().enumerate() {
        let d = dist2(xi, p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Nearest-neighbour lookup, using sorted midpoints on the line.
pub(crate) struct Locator<'a> {
    grid: &'a Grid,
    sorted: Vec<usize>,
    mids: Vec<f64>,
}

impl<'a> Locator<'a> {
    pub(crate) fn new(grid: &'a Grid) -> Self {
        if grid.dim() != 1 {
            return Locator { grid, sorted: Vec::new(), mids: Vec::new() };
        }
        let sorted = sorted_order(grid);
        let mids = sorted.windows(2).map(|w| 0.5 * (grid.coords[w[0]] + grid.coords[w[1]])).collect();
        Locator { grid, sorted, mids }
    }

    pub(crate) fn locate(&self, xi: &[f64]) -> usize {
        if self.grid.dim() != 1 {
            return nearest_index(xi, self.grid);
        }
        let x = xi[0];
        let s = self.mids.partition_point(|&m| m < x);
        if s < self.mids.len() && self.mids[s] == x {
            self.sorted[s].min(self.sorted[s + 1])
        } else {
            self.sorted[s]
        }
    }
}

fn sorted_order(grid: &Grid) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid.coords[a].total_cmp(&grid.coords[b]));
    order
}

pub(crate) fn check_backend(grid: &Grid, dist: &Distribution, backend: &Backend) -> Result<()> {
    if grid.dim() != dist.dim() {
        return Err(Error::Config(format!("grid has dimension {}, law has {}", grid.dim(), dist.dim())));
    }
    match backend {
        Backend::Exact1d if dist.kind() != Kind::Analytic1d => Err(Error::UnsupportedBackend(
            "exact1d needs a one-dimensional analytic law".into(),
        )),
        Backend::Atoms if dist.kind() != Kind::Empirical => {
            Err(Error::UnsupportedBackend("atoms needs an empirical measure".into()))
        }
        Backend::Planar { order } => {
            if dist.dim() != 2 || dist.kind() == Kind::Empirical {
                Err(Error::UnsupportedBackend("planar needs a two-dimensional law with a density".into()))
            } else if *order == 0 {
                Err(Error::Config("planar quadrature order must be positive".into()))
            } else {
                Ok(())
            }
        }
        Backend::MonteCarlo { samples, .. } if *samples < 2 => {
            Err(Error::Config("monte carlo backend needs at least 2 samples".into()))
        }
        _ => Ok(()),
    }
}

/// Mass, centroid and second moment of every cell.
pub fn cell_stats(grid: &Grid, dist: &Distribution, backend: &Backend) -> Result<Vec<CellStats>> {
    check_backend(grid, dist, backend)?;
    match *backend {
        Backend::Exact1d => exact_1d(grid, dist),
        Backend::MonteCarlo { samples, seed } => {
            let xs = dist.sample_flat(samples, seed, Stream::Integration, 0)?;
            Ok(accumulate(grid, &xs, None))
        }
        Backend::Atoms => match dist.family() {
            Family::Empirical(e) => Ok(accumulate(grid, &e.points, Some(e.weights()))),
            _ => unreachable!("checked above"),
        },
        Backend::Planar { order } => planar(grid, dist, order),
    }
}

fn exact_1d(grid: &Grid, dist: &Distribution) -> Result<Vec<CellStats>> {
    let order = sorted_order(grid);
    let n = order.len();
    let mut out = vec![None; n];
    for (s, &i) in order.iter().enumerate() {
        let lo = if s == 0 { f64::NEG_INFINITY } else { 0.5 * (grid.coords[order[s - 1]] + grid.coords[i]) };
        let hi = if s + 1 == n { f64::INFINITY } else { 0.5 * (grid.coords[i] + grid.coords[order[s + 1]]) };
        let st = dist.interval_stats(lo, hi)?;
        let second = dist.interval_second_moment(lo, hi, grid.coords[i])?;
        let centroid = (st.mass > 0.0).then(|| vec![st.first_moment / st.mass]);
        out[i] = Some(CellStats { mass: st.mass, centroid, second_moment: second.max(0.0), std_err: None });
    }
    Ok(out.into_iter().map(|c| c.expect("every index visited")).collect())
}

#[derive(Clone)]
struct Acc {
    weight: Vec<f64>,
    count: Vec<f64>,
    first: Vec<f64>,
    square: Vec<f64>,
    dist2: Vec<f64>,
    dist4: Vec<f64>,
}

impl Acc {
    fn new(n: usize, d: usize) -> Self {
        Acc {
            weight: vec![0.0; n],
            count: vec![0.0; n],
            first: vec![0.0; n * d],
            square: vec![0.0; n * d],
            dist2: vec![0.0; n],
            dist4: vec![0.0; n],
        }
    }

    fn merge(&mut self, other: &Acc) {
        for (a, b) in [
            (&mut self.weight, &other.weight),
            (&mut self.count, &other.count),
            (&mut self.first, &other.first),
            (&mut self.square, &other.square),
            (&mut self.dist2, &other.dist2),
            (&mut self.dist4, &other.dist4),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

const CHUNK: usize = 4096;

fn accumulate_chunk(loc: &Locator<'_>, xs: &[f64], weights: Option<&[f64]>, n: usize, d: usize) -> Acc {
    let mut acc = Acc::new(n, d);
    for (k, xi) in xs.chunks(d).enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        let i = loc.locate(xi);
        let r2 = dist2(xi, loc.grid.point(i));
        acc.weight[i] += w;
        acc.count[i] += 1.0;
        for c in 0..d {
            acc.first[i * d + c] += w * xi[c];
            acc.square[i * d + c] += w * xi[c] * xi[c];
        }
        acc.dist2[i] += w * r2;
        acc.dist4[i] += w * r2 * r2;
    }
    acc
}

fn accumulate(grid: &Grid, xs: &[f64], weights: Option<&[f64]>) -> Vec<CellStats> {
    let (n, d) = (grid.len(), grid.dim());
    let loc = Locator::new(grid);
    let total = xs.len() / d;
    let chunks: Vec<(usize, &[f64])> = xs.chunks(CHUNK * d).enumerate().collect();
    let work = |&(c, part): &(usize, &[f64])| {
        let w = weights.map(|w| &w[c * CHUNK..(c * CHUNK + part.len() / d)]);
        accumulate_chunk(&loc, part, w, n, d)
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Acc> = {
        use rayon::prelude::*;
        chunks.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Acc> = chunks.iter().map(work).collect();
    let mut acc = Acc::new(n, d);
    for p in &partials {
        acc.merge(p);
    }
    let nf = total as f64;
    (0..n)
        .map(|i| {
            let (w, cnt) = (acc.weight[i], acc.count[i]);
            let mass = if weights.is_some() { w } else { w / nf };
            let centroid = (w > 0.0).then(|| (0..d).map(|c| acc.first[i * d + c] / w).collect::<Vec<_>>());
            let second = if weights.is_some() { acc.dist2[i] } else { acc.dist2[i] / nf };
            let std_err = weights.is_none().then(|| {
                let sm_var = (acc.dist4[i] / nf - second * second).max(0.0);
                let centroid_se = (0..d)
                    .map(|c| {
                        if cnt > 1.0 {
                            let m = acc.first[i * d + c] / w;
                            let var = (acc.square[i * d + c] / w - m * m).max(0.0) * cnt / (cnt - 1.0);
                            (var / cnt).sqrt()
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect();
                CellStdErr {
                    mass: (mass * (1.0 - mass) / nf).sqrt(),
                    centroid: centroid_se,
                    second_moment: (sm_var / nf).sqrt(),
                }
            });
            CellStats { mass, centroid, second_moment: second, std_err }
        })
        .collect()
}

/// Integration window for planar cells: the support box, or eight standard
/// deviations around the mean for Gaussian laws.
pub fn planar_window(dist: &Distribution, sigmas: f64) -> Result<([f64; 2], [f64; 2])> {
    match dist.family() {
        Family::Uniform { lo, hi } if lo.len() == 2 => Ok(([lo[0], lo[1]], [hi[0], hi[1]])),
        Family::Gaussian { mean, std } if mean.len() == 2 => Ok((
            [mean[0] - sigmas * std[0], mean[1] - sigmas * std[1]],
            [mean[0] + sigmas * std[0], mean[1] + sigmas * std[1]],
        )),
        _ => Err(Error::UnsupportedBackend("planar cells need a 2D uniform or gaussian law".into())),
    }
}

/// Voronoi cell `i` clipped to the axis-aligned window, as a convex polygon
/// in counter-clockwise order (possibly empty).
pub fn cell_polygon(grid: &Grid, i: usize, lo: [f64; 2], hi: [f64; 2]) -> Vec<[f64; 2]> {
    let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let xi = grid.point(i);
    for (j, xj) in grid.points().enumerate() {
        if j == i || poly.is_empty() {
            continue;
        }
        let normal = [xj[0] - xi[0], xj[1] - xi[1]];
        let offset = 0.5 * (normal[0] * (xi[0] + xj[0]) + normal[1] * (xi[1] + xj[1]));
        poly = clip_half_plane(&poly, normal, offset);
    }
    poly
}

/// Keeps the part of `poly` where `normal · p <= offset`.
fn clip_half_plane(poly: &[[f64; 2]], normal: [f64; 2], offset: f64) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| normal[0] * p[0] + normal[1] * p[1] - offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let (sa, sb) = (side(&a), side(&b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn planar(grid: &Grid, dist: &Distribution, order: usize) -> Result<Vec<CellStats>> {
    let (lo, hi) = planar_window(dist, 8.0)?;
    let (nodes, weights) = gauss_legendre(order);
    let (u, wu): (Vec<f64>, Vec<f64>) = nodes.iter().zip(&weights).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).unzip();
    let max_edge = match dist.family() {
        Family::Gaussian { std, .. } => std[0].min(std[1]),
        _ => f64::INFINITY,
    };
    let stats = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            let poly = cell_polygon(grid, i, lo, hi);
            let mut sums = [0.0f64; 4];
            if poly.len() >= 3 {
                for k in 1..poly.len() - 1 {
                    integrate_triangle(poly[0], poly[k], poly[k + 1], max_edge, &u, &wu, &mut |p, w| {
                        let rho = dist.density(&p).unwrap_or(0.0) * w;
                        sums[0] += rho;
                        sums[1] += rho * p[0];
                        sums[2] += rho * p[1];
                        sums[3] += rho * ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2));
                    });
                }
            }
            let mass = sums[0];
            CellStats {
                mass,
                centroid: (mass > 0.0).then(|| vec![sums[1] / mass, sums[2] / mass]),
                second_moment: sums[3],
                std_err: None,
            }
        })
        .collect();
    Ok(stats)
}

/// Collapsed-square rule on a triangle, subdividing until every edge is at most `max_edge`.
fn integrate_triangle(
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    max_edge: f64,
    u: &[f64],
    wu: &[f64],
    f: &mut dyn FnMut([f64; 2], f64),
) {
    let len = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let longest = len(a, b).max(len(b, c)).max(len(c, a));
    if longest > max_edge {
        let mid = |p: [f64; 2], q: [f64; 2]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        for (p, q, r) in [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)] {
            integrate_triangle(p, q, r, max_edge, u, wu, f);
        }
        return;
    }
    let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
    if area2 == 0.0 {
        return;
    }
    for (s, ws) in u.iter().zip(wu) {
        for (t, wt) in u.iter().zip(wu) {
            let p = [
                a[0] + s * (b[0] - a[0]) + s * t * (c[0] - b[0]),
                a[1] + s * (b[1] - a[1]) + s * t * (c[1] - b[1]),
            ];
            f(p, ws * wt * s * area2);
        }
    }
}

/// Smallest distance between two distinct grid points (`+∞` below two points).
pub fn min_pairwise_distance(grid: &Grid) -> f64 {
    let n = grid.len();
    if n < 2 {
        return f64::INFINITY;
    }
    if grid.dim() == 1 {
        let order = sorted_order(grid);
        return order
            .windows(2)
            .map(|w| grid.coords[w[1]] - grid.coords[w[0]])
            .fold(f64::INFINITY, f64::min);
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min(dist2(grid.point(i), grid.point(j)));
        }
    }
    best.sqrt()
}

/// Median hyperplane of a pair of grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub i: usize,
    pub j: usize,
    /// Midpoint `(x_i + x_j) / 2`.
    pub anchor: Vec<f64>,
    /// Unit normal `(x_j - x_i) / |x_j - x_i|`.
    pub normal: Vec<f64>,
    /// Whether the closed cells share a boundary piece of positive measure.
    pub active: bool,
}

/// Parameter interval `[t0, t1]` of the shared edge of cells `i`, `j` of a
/// planar grid, along `anchor + t * tangent` with `tangent` the normal rotated
/// by +90°. `None` when the cells do not share an edge.
pub fn shared_edge_2d(grid: &Grid, i: usize, j: usize) -> Option<(f64, f64)> {
    let (xi, xj) = (grid.point(i), grid.point(j));
    let anchor = [0.5 * (xi[0] + xj[0]), 0.5 * (xi[1] + xj[1])];
    let len = dist2(xi, xj).sqrt();
    let tangent = [-(xj[1] - xi[1]) / len, (xj[0] - xi[0]) / len];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (k, xk) in grid.points().enumerate() {
        if k == i || k == j {
            continue;
        }
        // |p - x_k|^2 - |p - x_i|^2 = 2 p·(x_i - x_k) + |x_k|^2 - |x_i|^2 >= 0
        let g = [xi[0] - xk[0], xi[1] - xk[1]];
        let c0 = 2.0 * (anchor[0] * g[0] + anchor[1] * g[1]) + (xk[0] * xk[0] + xk[1] * xk[1])
            - (xi[0] * xi[0] + xi[1] * xi[1]);
        let c1 = 2.0 * (tangent[0] * g[0] + tangent[1] * g[1]);
        if c1 == 0.0 {
            if c0 < 0.0 {
                return None;
            }
        } else if c1 > 0.0 {
            t0 = t0.max(-c0 / c1);
        } else {
            t1 = t1.min(-c0 / c1);
        }
    }
    let scale = 1.0 + len;
    (t1 - t0 > 1e-12 * scale).then_some((t0, t1))
}

/// All median hyperplanes with their activity flags.
///
/// Activity is decided exactly on the line and in the plane, and by
/// `probes` random points on each hyperplane in higher dimensions.
pub fn boundary_faces(grid: &Grid, probes: usize) -> Result<Vec<Face>> {
    let (n, d) = (grid.len(), grid.dim());
    if let Some((i, j)) = grid.first_duplicate() {
        return Err(Error::Invariant(format!("duplicate points {i} and {j}")));
    }
    let mut bbox_diam = 0.0f64;
    for c in 0..d {
        let vals = grid.points().map(|p| p[c]);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        bbox_diam += (hi - lo).powi(2);
    }
    let half_width = bbox_diam.sqrt() + 1.0;
    let mut faces = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (xi, xj) = (grid.point(i), grid.point(j));
            let len = dist2(xi, xj).sqrt();
            let anchor: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| 0.5 * (a + b)).collect();
            let normal: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| (b - a) / len).collect();
            let active = match d {
                1 => {
                    let ri = (anchor[0] - xi[0]).abs();
                    (0..n).all(|k| k == i || k == j || (anchor[0] - grid.coords[k]).abs() > ri)
                }
                2 => shared_edge_2d(grid, i, j).is_some(),
                _ => probe_face(grid, i, j, &anchor, &normal, half_width, probes),
            };
            faces.push(Face { i, j, anchor, normal, active });
        }
    }
    Ok(faces)
}

fn probe_face(grid: &Grid, i: usize, j: usize, anchor: &[f64], normal: &[f64], half_width: f64, probes: usize) -> bool {
    use rand::Rng;
    let d = anchor.len();
    let mut rng = stream_rng((i * grid.len() + j) as u64, Stream::Probe, 0);
    let xi = grid.point(i);
    for _ in 0..probes.max(1) {
        // random direction projected onto the hyperplane
        let mut p: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..half_width)).collect();
        let dot: f64 = p.iter().zip(normal).map(|(a, b)| a * b).sum();
        p.iter_mut().zip(normal).for_each(|(v, nrm)| *v -= dot * nrm);
        let q: Vec<f64> = p.iter().zip(anchor).map(|(v, a)| v + a).collect();
        let ri = dist2(&q, xi);
        if (0..grid.len()).all(|k| k == i || k == j || dist2(&q, grid.point(k)) > ri * (1.0 + 1e-12)) {
            return true;
        }
    }
    false
}
