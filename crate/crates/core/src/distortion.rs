//! Distortion `G(x) = E min_i |X - x_i|^2`, its gradient, the energy gap
//! between iterates, and multi-start estimates of the optimal error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lloyd::{self, LloydConfig};
use crate::measure::{dist2, mean_with_error, Distribution, Family};
use crate::rng::Stream;
use crate::voronoi::{cell_stats, check_backend, Backend, CellStats, Grid, Locator};

/// Distortion value and quadratic quantization error `e = sqrt(G)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    pub quant_error: f64,
    pub std_err: Option<f64>,
}

impl EnergyReport {
    pub fn new(value: f64, std_err: Option<f64>) -> Self {
        EnergyReport { value, quant_error: value.max(0.0).sqrt(), std_err }
    }
}

/// Sum of the per-cell second moments.
pub fn energy_from_stats(stats: &[CellStats]) -> f64 {
    stats.iter().map(|c| c.second_moment).sum()
}

pub fn distortion(grid: &Grid, dist: &Distribution, backend: &Backend) -> Result<EnergyReport> {
    check_backend(grid, dist, backend)?;
    if let Backend::MonteCarlo { samples, seed } = *backend {
        let xs = dist.sample_flat(samples, seed, Stream::Integration, 0)?;
        let loc = Locator::new(grid);
        let vals = xs.chunks(grid.dim()).map(|x| dist2(x, grid.point(loc.locate(x))));
        let est = mean_with_error(vals, samples);
        return Ok(EnergyReport::new(est.value, est.std_err));
    }
    let stats = cell_stats(grid, dist, backend)?;
    Ok(EnergyReport::new(energy_from_stats(&stats), None))
}

/// `∂G/∂x_i = 2 M_i (x_i - centroid_i)`, flattened; empty cells contribute zero.
pub fn gradient_from_stats(grid: &Grid, stats: &[CellStats]) -> Vec<f64> {
    let d = grid.dim();
    let mut g = vec![0.0; grid.len() * d];
    for (i, c) in stats.iter().enumerate() {
        if let Some(cent) = &c.centroid {
            for k in 0..d {
                g[i * d + k] = 2.0 * c.mass * (grid.point(i)[k] - cent[k]);
            }
        }
    }
    g
}

/// Gradient of the distortion, flattened row-major as `N * d` components.
pub fn gradient(grid: &Grid, dist: &Distribution, backend: &Backend) -> Result<Vec<f64>> {
    let stats = cell_stats(grid, dist, backend)?;
    Ok(gradient_from_stats(grid, &stats))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Δ(k) = Σ_j M_j |x_j^(k) - x_j^(k+1)|^2`.
pub fn energy_gap(stats: &[CellStats], grid_k: &Grid, grid_k1: &Grid) -> Result<f64> {
    if stats.len() != grid_k.len() || grid_k.len() != grid_k1.len() || grid_k.dim() != grid_k1.dim() {
        return Err(Error::Invariant(format!(
            "energy gap needs matching sizes, got {} stats, {} and {} points",
            stats.len(),
            grid_k.len(),
            grid_k1.len()
        )));
    }
    Ok(stats
        .iter()
        .enumerate()
        .map(|(j, c)| c.mass * dist2(grid_k.point(j), grid_k1.point(j)))
        .sum())
}

/// Best error found over randomized restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalEstimate {
    /// Upper bound on `e_N(X)`.
    pub error: f64,
    pub energy: f64,
    pub grid: Grid,
    pub restart: usize,
    /// Final energy of every restart, in restart order.
    pub energies: Vec<f64>,
}

/// `n` distinct points drawn from the law for restart number `restart`.
pub fn random_grid(dist: &Distribution, n: usize, seed: u64, restart: u64) -> Result<Grid> {
    if let Family::Empirical(e) = dist.family() {
        if e.len() <= n {
            return Err(Error::Config(format!("empirical measure has {} atoms, need more than {n}", e.len())));
        }
    }
    let d = dist.dim();
    let mut coords: Vec<f64> = Vec::with_capacity(n * d);
    let mut batch = 0u64;
    while coords.len() < n * d {
        let xs = dist.sample_flat(4 * n, seed, Stream::Restart, (restart << 16) | batch)?;
        for x in xs.chunks(d) {
            if coords.len() < n * d && !coords.chunks(d).any(|p| p == x) {
                coords.extend_from_slice(x);
            }
        }
        batch += 1;
        if batch > 1000 {
            return Err(Error::Seeding { attempts: 1000 * 4 * n, detail: "could not draw distinct points".into() });
        }
    }
    Grid::from_flat(d, coords)
}

/// Runs Lloyd from `restarts` random initial grids and keeps the lowest error.
pub fn estimate_optimal_error(
    dist: &Distribution,
    n: usize,
    restarts: usize,
    seed: u64,
    config: &LloydConfig,
) -> Result<OptimalEstimate> {
    if n == 0 || restarts == 0 {
        return Err(Error::Config("level and restart count must be positive".into()));
    }
    let one = |r: usize| -> Result<(Grid, f64)> {
        let g0 = random_grid(dist, n, seed, r as u64)?;
        let out = lloyd::run(&g0, dist, config)?;
        Ok((out.grid, out.trace.final_energy))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Grid, f64)>> = {
        use rayon::prelude::*;
        (0..restarts).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Grid, f64)>> = (0..restarts).map(one).collect();
    let results: Vec<(Grid, f64)> = results.into_iter().collect::<Result<_>>()?;
    let energies: Vec<f64> = results.iter().map(|r| r.1).collect();
    let (best, _) = energies
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, be), (i, &e)| if e < be { (i, e) } else { (bi, be) });
    let (grid, energy) = results.into_iter().nth(best).expect("non-empty");
    Ok(OptimalEstimate { error: energy.max(0.0).sqrt(), energy, grid, restart: best, energies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{normal_cdf, normal_pdf};
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn exact() -> Backend {
        Backend::Exact1d
    }

    #[test]
    fn single_point_at_mean_gives_variance() {
        let g = Grid::line(&[0.0]).unwrap();
        assert!((distortion(&g, &Distribution::standard_normal(1), &exact()).unwrap().value - 1.0).abs() < 1e-15);
        let g = Grid::line(&[0.5]).unwrap();
        assert!((distortion(&g, &Distribution::uniform01(), &exact()).unwrap().value - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_midpoint_grids() {
        let u = Distribution::uniform01();
        let r = distortion(&Grid::line(&[0.25, 0.75]).unwrap(), &u, &exact()).unwrap();
        assert!((r.value - 1.0 / 48.0).abs() < 1e-15);
        assert!((r.quant_error * r.quant_error - r.value).abs() < 1e-12 * r.value);
        for n in 1..=12 {
            let pts: Vec<f64> = (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect();
            let v = distortion(&Grid::line(&pts).unwrap(), &u, &exact()).unwrap().value;
            assert!((v - 1.0 / (12.0 * (n * n) as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_examples() {
        let u = Distribution::uniform01();
        let g = gradient(&Grid::line(&[0.25, 0.75]).unwrap(), &u, &exact()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let n = Distribution::standard_normal(1);
        for a in [-1.5, 0.0, 0.3, 2.0] {
            let g = gradient(&Grid::line(&[a]).unwrap(), &n, &exact()).unwrap();
            assert!((g[0] - 2.0 * a).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let dists = [Distribution::standard_normal(1), Distribution::exponential(1.0).unwrap(), Distribution::uniform01()];
        let mut rng = stream_rng(3, Stream::Probe, 0);
        for dist in &dists {
            for _ in 0..20 {
                let n = rng.random_range(1..7);
                let (lo, hi) = match dist.family() {
                    Family::Uniform { .. } => (0.0, 1.0),
                    Family::Exponential { .. } => (0.05, 3.0),
                    _ => (-2.0, 2.0),
                };
                let pts: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
                let g = Grid::line(&pts).unwrap();
                let grad = gradient(&g, dist, &exact()).unwrap();
                for i in 0..n {
                    let h = 1e-5 * (1.0 + pts[i].abs());
                    let mut p = pts.clone();
                    p[i] += h;
                    let up = distortion(&Grid::line(&p).unwrap(), dist, &exact()).unwrap().value;
                    p[i] -= 2.0 * h;
                    let down = distortion(&Grid::line(&p).unwrap(), dist, &exact()).unwrap().value;
                    let fd = (up - down) / (2.0 * h);
                    assert!((fd - grad[i]).abs() < 1e-6, "{}: {fd} vs {}", dist.label(), grad[i]);
                }
            }
        }
    }

    #[test]
    fn energy_gap_examples() {
        let n = Distribution::standard_normal(1);
        let g0 = Grid::line(&[-1.0, 2.0]).unwrap();
        let stats = cell_stats(&g0, &n, &exact()).unwrap();
        let g1 = Grid::line(&[stats[0].centroid.as_ref().unwrap()[0], stats[1].centroid.as_ref().unwrap()[0]]).unwrap();
        let gap = energy_gap(&stats, &g0, &g1).unwrap();
        let (p, f) = (normal_cdf(0.5), normal_pdf(0.5));
        let oracle = p * (-1.0 + f / p).powi(2) + (1.0 - p) * (2.0 - f / (1.0 - p)).powi(2);
        assert!((gap - oracle).abs() < 1e-14);
        assert!((gap - 0.3942).abs() < 1e-4);
        assert_eq!(energy_gap(&stats, &g0, &g0).unwrap(), 0.0);
        assert!(energy_gap(&stats[..1], &g0, &g1).is_err());
    }

    #[test]
    fn gradient_bound_and_permutation_symmetry() {
        let dist = Distribution::gaussian(vec![1.0], vec![2.0]).unwrap();
        let mut rng = stream_rng(8, Stream::Probe, 1);
        for _ in 0..50 {
            let n = rng.random_range(1..9);
            let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..8.0)).collect();
            let g = Grid::line(&pts).unwrap();
            let e = distortion(&g, &dist, &exact()).unwrap().value;
            let grad = gradient(&g, &dist, &exact()).unwrap();
            assert!(norm(&grad).powi(2) <= 4.0 * e * (1.0 + 1e-12));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            let pg = Grid::line(&perm.iter().map(|&i| pts[i]).collect::<Vec<_>>()).unwrap();
            let pe = distortion(&pg, &dist, &exact()).unwrap().value;
            assert!((pe - e).abs() < 1e-14 * (1.0 + e));
            let pgrad = gradient(&pg, &dist, &exact()).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                assert!((pgrad[k] - grad[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn orthogonal_invariance_for_standard_gaussian() {
        let dist = Distribution::standard_normal(2);
        let backend = Backend::MonteCarlo { samples: 100_000, seed: 13 };
        let g = Grid::new(vec![vec![0.5, 0.1], vec![-1.0, 0.7], vec![0.2, -1.3]]).unwrap();
        let base = distortion(&g, &dist, &backend).unwrap();
        for angle in [0.3f64, 1.1, 2.5, 4.0] {
            let (c, s) = (angle.cos(), angle.sin());
            let rot = g.map_points(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1]]).unwrap();
            let r = distortion(&rot, &dist, &backend).unwrap();
            let se = (base.std_err.unwrap().powi(2) + r.std_err.unwrap().powi(2)).sqrt();
            assert!((r.value - base.value).abs() < 4.0 * se);
        }
        let planar = Backend::Planar { order: 8 };
        let base = distortion(&g, &dist, &planar).unwrap().value;
        let rot = g.map_points(|p| vec![-p[1], p[0]]).unwrap();
        assert!((distortion(&rot, &dist, &planar).unwrap().value - base).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn distortion_is_permutation_invariant(mut pts in proptest::collection::vec(-3.0f64..3.0, 1..8), shift in 0usize..8) {
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let dist = Distribution::standard_normal(1);
            let e = distortion(&Grid::line(&pts).unwrap(), &dist, &Backend::Exact1d).unwrap().value;
            let k = shift % pts.len();
            pts.rotate_left(k);
            let e2 = distortion(&Grid::line(&pts).unwrap(), &dist, &Backend::Exact1d).unwrap().value;
            prop_assert!((e - e2).abs() <= 1e-14 * (1.0 + e));
        }
    }
}
