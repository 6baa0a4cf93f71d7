//! Hessian of the distortion for laws with a continuous density, a
//! finite-difference oracle, and the stability label of stationary grids.
//!
//! With `∂G/∂x_i = 2 ∫_{C_i} (x_i - ξ) dμ` the blocks are
//!
//! ```text
//! H_ij = (2 / |x_i - x_j|) ∫_{C_i ∩ C_j} (x_i - ξ) ⊗ (x_j - ξ) ρ(ξ) dλ(ξ)                 (i ≠ j)
//! H_ii = 2 μ(C_i) I - Σ_{j ≠ i} (2 / |x_i - x_j|) ∫_{C_i ∩ C_j} (x_i - ξ) ⊗ (x_i - ξ) ρ(ξ) dλ(ξ)
//! ```
//!
//! where `λ` is the surface measure on the shared face.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distortion::gradient;
use crate::error::{Error, Result};
use crate::measure::{dist2, Distribution, Kind};
use crate::quadrature::gauss_legendre;
use crate::voronoi::{cell_stats, planar_window, shared_edge_2d, Backend, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    LocalMin,
    Saddle,
    Degenerate,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::LocalMin => "local_min",
            Label::Saddle => "saddle",
            Label::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub dim: usize,
    pub n: usize,
    /// `(N d) × (N d)`, row-major, symmetrized.
    pub matrix: Vec<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub label: Label,
    /// Max abs deviation from central differences of the gradient.
    pub fd_discrepancy: Option<f64>,
    /// Max abs deviation from symmetry before averaging with the transpose.
    pub asymmetry: f64,
}

const FD_STEP_1D: f64 = 1e-4;
const FD_STEP_2D: f64 = 1e-4;
const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalue tolerance `1e-7 (1 + spectral radius)`.
pub fn eigen_tolerance(eigenvalues: &[f64]) -> f64 {
    let rho = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-7 * (1.0 + rho)
}

fn label_of(eigenvalues: &[f64]) -> Label {
    let tol = eigen_tolerance(eigenvalues);
    let min = eigenvalues.first().copied().unwrap_or(0.0);
    let max = eigenvalues.last().copied().unwrap_or(0.0);
    if min > tol {
        Label::LocalMin
    } else if min < -tol && max > tol {
        Label::Saddle
    } else {
        Label::Degenerate
    }
}

fn asymmetry(m: &[f64], size: usize) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..size {
        for c in r + 1..size {
            worst = worst.max((m[r * size + c] - m[c * size + r]).abs());
        }
    }
    worst
}

fn symmetrize(m: &mut [f64], size: usize) {
    for r in 0..size {
        for c in r + 1..size {
            let avg = 0.5 * (m[r * size + c] + m[c * size + r]);
            m[r * size + c] = avg;
            m[c * size + r] = avg;
        }
    }
}

/// Ascending eigenvalues of a symmetric row-major matrix.
pub fn eigenvalues(matrix: &[f64], size: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(DMatrix::from_row_slice(size, size, matrix)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Label of a symmetric matrix; rejects matrices that are not symmetric within `1e-8`.
pub fn classify_matrix(matrix: &[f64], size: usize) -> Result<Label> {
    if matrix.len() != size * size {
        return Err(Error::Invariant(format!("matrix has {} entries, expected {size}²", matrix.len())));
    }
    let asym = asymmetry(matrix, size);
    if asym > SYMMETRY_TOL {
        return Err(Error::Invariant(format!("matrix is not symmetric (deviation {asym:e})")));
    }
    Ok(label_of(&eigenvalues(matrix, size)))
}

pub fn classify(report: &HessianReport) -> Result<Label> {
    classify_matrix(&report.matrix, report.n * report.dim)
}

fn report(grid: &Grid, mut matrix: Vec<f64>, fd: Option<Vec<f64>>) -> HessianReport {
    let size = grid.len() * grid.dim();
    let asym = asymmetry(&matrix, size);
    symmetrize(&mut matrix, size);
    let eigenvalues = eigenvalues(&matrix, size);
    let fd_discrepancy = fd.map(|f| f.iter().zip(&matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    HessianReport { dim: grid.dim(), n: grid.len(), matrix, label: label_of(&eigenvalues), eigenvalues, fd_discrepancy, asymmetry: asym }
}

fn require_density(dist: &Distribution, d: usize) -> Result<()> {
    if dist.dim() != d {
        return Err(Error::Config(format!("law has dimension {}, expected {d}", dist.dim())));
    }
    if dist.kind() == Kind::Empirical || dist.density(dist.mean()).is_none() {
        return Err(Error::UnsupportedBackend("the Hessian needs a law with a density".into()));
    }
    Ok(())
}

/// Tridiagonal (in sorted order) Hessian of a grid on the line.
pub fn hessian_1d(grid: &Grid, dist: &Distribution) -> Result<HessianReport> {
    require_density(dist, 1)?;
    if grid.dim() != 1 {
        return Err(Error::Config("hessian_1d needs a grid on the line".into()));
    }
    let n = grid.len();
    let x = grid.coords();
    let stats = cell_stats(grid, dist, &Backend::Exact1d)?;
    let mut h = vec![0.0; n * n];
    for (i, c) in stats.iter().enumerate() {
        h[i * n + i] = 2.0 * c.mass;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let gap = x[b] - x[a];
        let rho = dist.density(&[0.5 * (x[a] + x[b])]).unwrap_or(0.0);
        let term = 0.5 * rho * gap;
        h[a * n + a] -= term;
        h[b * n + b] -= term;
        h[a * n + b] = -term;
        h[b * n + a] = -term;
    }
    let fd = hessian_fd(grid, dist, &Backend::Exact1d, FD_STEP_1D)?;
    Ok(report(grid, h, Some(fd)))
}

/// Range of `t` with `anchor + t * dir` inside the box.
fn clip_line(anchor: [f64; 2], dir: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> (f64, f64) {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..2 {
        if dir[k] == 0.0 {
            if anchor[k] < lo[k] || anchor[k] > hi[k] {
                return (1.0, 0.0);
            }
        } else {
            let (a, b) = ((lo[k] - anchor[k]) / dir[k], (hi[k] - anchor[k]) / dir[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0, t1)
}

/// Hessian of a planar grid by composite Gauss–Legendre quadrature with
/// `quad_points` nodes along every shared edge.
///
/// Edges are clipped to the support box, or to eight standard deviations
/// around the mean for Gaussian laws.
pub fn hessian_2d(grid: &Grid, dist: &Distribution, quad_points: usize) -> Result<HessianReport> {
    let (matrix, _) = hessian_2d_matrix(grid, dist, quad_points)?;
    let fd = hessian_fd(grid, dist, &Backend::Planar { order: 8 }, FD_STEP_2D)?;
    Ok(report(grid, matrix, Some(fd)))
}

/// As [`hessian_2d`] but without the finite-difference audit.
pub fn hessian_2d_unaudited(grid: &Grid, dist: &Distribution, quad_points: usize) -> Result<HessianReport> {
    let (matrix, _) = hessian_2d_matrix(grid, dist, quad_points)?;
    Ok(report(grid, matrix, None))
}

const PANEL: usize = 8;

fn hessian_2d_matrix(grid: &Grid, dist: &Distribution, quad_points: usize) -> Result<(Vec<f64>, usize)> {
    require_density(dist, 2)?;
    if grid.dim() != 2 {
        return Err(Error::Config("hessian_2d needs a planar grid".into()));
    }
    let (lo, hi) = planar_window(dist, 8.0)?;
    let n = grid.len();
    let size = 2 * n;
    let panels = quad_points.div_ceil(PANEL).max(1);
    let (nodes, weights) = gauss_legendre(PANEL);
    let stats = cell_stats(grid, dist, &Backend::Planar { order: 8 })?;
    let mut h = vec![0.0; size * size];
    for (i, c) in stats.iter().enumerate() {
        h[(2 * i) * size + 2 * i] = 2.0 * c.mass;
        h[(2 * i + 1) * size + 2 * i + 1] = 2.0 * c.mass;
    }
    let mut active = 0;
    for i in 0..n {
        for j in i + 1..n {
            let Some((e0, e1)) = shared_edge_2d(grid, i, j) else { continue };
            let (xi, xj) = (grid.point(i), grid.point(j));
            let len = dist2(xi, xj).sqrt();
            let nu = [(xj[0] - xi[0]) / len, (xj[1] - xi[1]) / len];
            let tau = [-nu[1], nu[0]];
            let anchor = [0.5 * (xi[0] + xj[0]), 0.5 * (xi[1] + xj[1])];
            let (w0, w1) = clip_line(anchor, tau, lo, hi);
            let (t0, t1) = (e0.max(w0), e1.min(w1));
            if !(t1 > t0) {
                continue;
            }
            if !(t1 - t0).is_finite() {
                return Err(Error::Quadrature(format!("unbounded shared edge between {i} and {j}")));
            }
            active += 1;
            // Σ w ρ (x_i - ξ) ⊗ (x_j - ξ), and the same for (x_i - ξ) ⊗ (x_i - ξ), (x_j - ξ) ⊗ (x_j - ξ)
            let (mut cross, mut own_i, mut own_j) = ([[0.0; 2]; 2], [[0.0; 2]; 2], [[0.0; 2]; 2]);
            let step = (t1 - t0) / panels as f64;
            for p in 0..panels {
                let a = t0 + p as f64 * step;
                for (node, w) in nodes.iter().zip(&weights) {
                    let t = a + 0.5 * step * (node + 1.0);
                    let xi_pt = [anchor[0] + t * tau[0], anchor[1] + t * tau[1]];
                    let rho = dist.density(&xi_pt).unwrap_or(0.0) * 0.5 * step * w;
                    if !rho.is_finite() {
                        return Err(Error::Quadrature(format!("non-finite density on the edge between {i} and {j}")));
                    }
                    let u = [xi[0] - xi_pt[0], xi[1] - xi_pt[1]];
                    let v = [xj[0] - xi_pt[0], xj[1] - xi_pt[1]];
                    for r in 0..2 {
                        for s in 0..2 {
                            cross[r][s] += rho * u[r] * v[s];
                            own_i[r][s] += rho * u[r] * u[s];
                            own_j[r][s] += rho * v[r] * v[s];
                        }
                    }
                }
            }
            let k = 2.0 / len;
            for r in 0..2 {
                for s in 0..2 {
                    h[(2 * i + r) * size + 2 * j + s] += k * cross[r][s];
                    h[(2 * j + s) * size + 2 * i + r] += k * cross[r][s];
                    h[(2 * i + r) * size + 2 * i + s] -= k * own_i[r][s];
                    h[(2 * j + r) * size + 2 * j + s] -= k * own_j[r][s];
                }
            }
        }
    }
    Ok((h, active))
}

/// Central differences of the gradient, symmetrized, row-major `(N d) × (N d)`.
pub fn hessian_fd(grid: &Grid, dist: &Distribution, backend: &Backend, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let d = grid.dim();
    let size = grid.len() * d;
    let mut m = vec![0.0; size * size];
    for col in 0..size {
        let shifted = |delta: f64| {
            let mut coords = grid.coords().to_vec();
            coords[col] += delta;
            Grid::from_flat(d, coords)
        };
        let plus = gradient(&shifted(h)?, dist, backend)?;
        let minus = gradient(&shifted(-h)?, dist, backend)?;
        for row in 0..size {
            m[row * size + col] = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    symmetrize(&mut m, size);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lloyd::{run, LloydConfig};
    use proptest::prelude::*;

    #[test]
    fn uniform_pair() {
        let r = hessian_1d(&Grid::line(&[0.25, 0.75]).unwrap(), &Distribution::uniform01()).unwrap();
        let want = [0.75, -0.25, -0.25, 0.75];
        assert!(r.matrix.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!((r.eigenvalues[0] - 0.5).abs() < 1e-12 && (r.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert_eq!(r.label, Label::LocalMin);
        assert!(r.fd_discrepancy.unwrap() < 1e-8);
        assert_eq!(classify(&r).unwrap(), Label::LocalMin);
    }

    #[test]
    fn single_point() {
        let r = hessian_1d(&Grid::line(&[0.0]).unwrap(), &Distribution::standard_normal(1)).unwrap();
        assert_eq!(r.matrix, vec![2.0]);
        assert_eq!(r.label, Label::LocalMin);
        let fd = hessian_fd(&Grid::line(&[0.0]).unwrap(), &Distribution::standard_normal(1), &Backend::Exact1d, 1e-4).unwrap();
        assert!((fd[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_matrix(&[-1.0, 0.0, 0.0, 1.0], 2).unwrap(), Label::Saddle);
        assert_eq!(classify_matrix(&[0.0, 0.0, 0.0, 1.0], 2).unwrap(), Label::Degenerate);
        assert_eq!(classify_matrix(&[1e-9, 0.0, 0.0, 1.0], 2).unwrap(), Label::Degenerate);
        assert_eq!(classify_matrix(&[-1.0, 0.0, 0.0, -2.0], 2).unwrap(), Label::Degenerate);
        assert_eq!(classify_matrix(&[2.0, 1.0, 1.0, 2.0], 2).unwrap(), Label::LocalMin);
        assert_eq!(classify_matrix(&[1.0, 0.5, 0.0, 1.0], 2).unwrap_err().code(), "invariant_violation");
    }

    #[test]
    fn fd_step_behaviour() {
        let g = Grid::line(&[-1.3, 0.2, 0.9]).unwrap();
        let n = Distribution::standard_normal(1);
        let exact = hessian_1d(&g, &n).unwrap().matrix;
        let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&h| hessian_fd(&g, &n, &Backend::Exact1d, h).unwrap().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        assert!(errs[1] < errs[0]);
        assert!(errs.iter().all(|&e| e < 1e-5), "{errs:?}");
    }

    #[test]
    fn normal_three_point_optimum_is_a_local_min() {
        let n = Distribution::standard_normal(1);
        let cfg = LloydConfig { tol_gap: Some(0.0), tol_move: 1e-12, ..Default::default() };
        let out = run(&Grid::line(&[-2.0, 0.3, 1.0]).unwrap(), &n, &cfg).unwrap();
        let r = hessian_1d(&out.grid, &n).unwrap();
        assert_eq!(r.label, Label::LocalMin);
    }

    #[test]
    fn unsupported_laws() {
        let e = Distribution::empirical(vec![vec![0.0], vec![1.0]], None).unwrap();
        assert_eq!(hessian_1d(&Grid::line(&[0.0, 1.0]).unwrap(), &e).unwrap_err().code(), "unsupported_backend");
        assert!(hessian_1d(&Grid::line(&[0.0]).unwrap(), &Distribution::standard_normal(2)).is_err());
    }

    fn square_grid() -> Grid {
        Grid::new(vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25], vec![0.75, 0.75]]).unwrap()
    }

    #[test]
    fn planar_square_grid() {
        let u = Distribution::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = square_grid();
        let grad = gradient(&g, &u, &Backend::Planar { order: 8 }).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-14));
        let r = hessian_2d(&g, &u, 512).unwrap();
        assert!(r.fd_discrepancy.unwrap() < 5e-4, "{:?}", r.fd_discrepancy);
        assert!(r.asymmetry < 1e-12);
    }

    #[test]
    fn far_pair_has_no_coupling() {
        let u = Distribution::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = Grid::new(vec![vec![0.1, 0.1], vec![0.9, 0.9], vec![0.5, 0.5]]).unwrap();
        let r = hessian_2d_unaudited(&g, &u, 64).unwrap();
        // the corner cells only touch the centre cell
        assert!(crate::voronoi::shared_edge_2d(&g, 0, 1).is_none());
        for (a, b) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert_eq!(r.matrix[a * 6 + b], 0.0);
        }
    }

    #[test]
    fn gaussian_planar_matches_fd() {
        let n = Distribution::standard_normal(2);
        let g = Grid::new(vec![vec![-0.8, 0.1], vec![0.7, -0.3], vec![0.2, 1.1], vec![0.0, -1.2]]).unwrap();
        let r = hessian_2d(&g, &n, 512).unwrap();
        assert!(r.fd_discrepancy.unwrap() < 5e-4, "{:?}", r.fd_discrepancy);
    }

    fn rotate(p: &[f64], a: f64) -> Vec<f64> {
        vec![a.cos() * p[0] - a.sin() * p[1], a.sin() * p[0] + a.cos() * p[1]]
    }

    #[test]
    fn rotation_equivariance() {
        let n = Distribution::standard_normal(2);
        let g = Grid::new(vec![vec![-0.8, 0.1], vec![0.7, -0.3], vec![0.2, 1.1]]).unwrap();
        let a = 0.7f64;
        let gr = g.map_points(|p| rotate(p, a)).unwrap();
        let h = hessian_2d_unaudited(&g, &n, 256).unwrap().matrix;
        let hr = hessian_2d_unaudited(&gr, &n, 256).unwrap().matrix;
        // hr = P h P^T with P block-diagonal rotations
        let size = 6;
        let rot = [[a.cos(), -a.sin()], [a.sin(), a.cos()]];
        let p = |r: usize, c: usize| if r / 2 == c / 2 { rot[r % 2][c % 2] } else { 0.0 };
        for r in 0..size {
            for c in 0..size {
                let mut v = 0.0;
                for k in 0..size {
                    for l in 0..size {
                        v += p(r, k) * h[k * size + l] * p(c, l);
                    }
                }
                assert!((v - hr[r * size + c]).abs() < 1e-6, "{r},{c}: {v} vs {}", hr[r * size + c]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn formula_matches_fd_on_random_lines(pts in proptest::collection::vec(-2.5f64..2.5, 1..7)) {
            let mut pts = pts;
            pts.sort_by(f64::total_cmp);
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-2);
            let g = Grid::line(&pts).unwrap();
            let r = hessian_1d(&g, &Distribution::standard_normal(1)).unwrap();
            prop_assert!(r.fd_discrepancy.unwrap() < 1e-5);
        }
    }
}
