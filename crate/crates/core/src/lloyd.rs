//! Batch Lloyd iteration, the splitting initializer and level ladder, and
//! the radius-bounded variant with pull-back.
//!
//! Every step has two phases: each generator moves to the centroid of its
//! current cell (empty cells keep their generator), then the cells are
//! recomputed for the new generators. Indices are never reshuffled, so the
//! trace follows each generator individually.

use serde::{Deserialize, Serialize};

use crate::distortion::{distortion, energy_from_stats, gradient_from_stats, norm};
use crate::error::{Error, Result};
use crate::measure::{dist2, Distribution};
use crate::voronoi::{cell_stats, min_pairwise_distance, Backend, CellStats, Grid};

/// What replaces a centroid that falls outside the ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pullback {
    /// The point where the segment from the old generator to the centroid crosses the sphere.
    #[default]
    Segment,
    /// Keep the old generator.
    Freeze,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    pub backend: Backend,
    pub max_iter: usize,
    /// Stop once the energy gap is at most this; `None` means `1e-18 * energy(0)`,
    /// about the gap of a `1e-9` move.
    pub tol_gap: Option<f64>,
    /// Stop once no generator moves farther than this.
    pub tol_move: f64,
    /// Radius of the ball `B(m_X, R)` confining the iterates.
    pub radius_bound: Option<f64>,
    pub pullback: Pullback,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            backend: Backend::Exact1d,
            max_iter: 10_000,
            tol_gap: None,
            tol_move: 1e-9,
            radius_bound: None,
            pullback: Pullback::Segment,
        }
    }
}

impl LloydConfig {
    pub fn with_backend(backend: Backend) -> Self {
        LloydConfig { backend, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.tol_gap.is_some_and(|t| !(t >= 0.0)) || !(self.tol_move >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        if self.radius_bound.is_some_and(|r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("radius bound must be positive and finite".into()));
        }
        Ok(())
    }
}

/// A centroid replaced to stay inside the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackEvent {
    pub index: usize,
    pub centroid: Vec<f64>,
    pub replacement: Vec<f64>,
    /// `M_j (|x_j^(k) - c_j|^2 - |x'_j - c_j|^2)`, never negative.
    pub descent: f64,
}

/// Result of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub grid: Grid,
    pub stats: Vec<CellStats>,
    /// Guaranteed energy decrease of the centroid phase.
    pub gap: f64,
    pub pullbacks: Vec<PullbackEvent>,
    /// Generators whose cell had zero mass and were kept in place.
    pub empty_cells: Vec<usize>,
}

fn step_from_stats(grid: &Grid, stats: Vec<CellStats>, ball: Option<(&[f64], f64, Pullback)>) -> Result<Step> {
    let d = grid.dim();
    let mut coords = Vec::with_capacity(grid.len() * d);
    let mut pullbacks = Vec::new();
    let mut empty_cells = Vec::new();
    let mut gap = 0.0;
    for (i, c) in stats.iter().enumerate() {
        let old = grid.point(i);
        let Some(centroid) = &c.centroid else {
            empty_cells.push(i);
            coords.extend_from_slice(old);
            continue;
        };
        let outside = ball.filter(|(center, r, _)| dist2(centroid, center) > r * r);
        let next = match outside {
            None => centroid.clone(),
            Some((center, r, policy)) => {
                let replacement = match policy {
                    Pullback::Segment => segment_sphere(old, centroid, center, r),
                    Pullback::Freeze => old.to_vec(),
                };
                let descent = c.mass * (dist2(old, centroid) - dist2(&replacement, centroid));
                if descent < -1e-12 * c.mass * dist2(old, centroid).max(1.0) {
                    return Err(Error::Invariant(format!("pull-back of generator {i} increases the energy by {}", -descent)));
                }
                pullbacks.push(PullbackEvent { index: i, centroid: centroid.clone(), replacement: replacement.clone(), descent });
                replacement
            }
        };
        gap += c.mass * (dist2(old, centroid) - dist2(&next, centroid));
        coords.extend_from_slice(&next);
    }
    let grid = Grid::from_flat(d, coords).map_err(|e| match e {
        Error::DuplicatePoint(i, j) => Error::Merge(i, j),
        other => other,
    })?;
    Ok(Step { grid, stats, gap: gap.max(0.0), pullbacks, empty_cells })
}

/// Point of the segment `[from, to]` on the sphere `∂B(center, r)`, for `from`
/// inside the closed ball and `to` outside. The result is inside the closed ball.
pub fn segment_sphere(from: &[f64], to: &[f64], center: &[f64], r: f64) -> Vec<f64> {
    let dir: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
    let off: Vec<f64> = from.iter().zip(center).map(|(a, b)| a - b).collect();
    let a: f64 = dir.iter().map(|v| v * v).sum();
    let b: f64 = 2.0 * dir.iter().zip(&off).map(|(u, v)| u * v).sum::<f64>();
    let c: f64 = off.iter().map(|v| v * v).sum::<f64>() - r * r;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let mut t = if b >= 0.0 { if b + disc > 0.0 { -2.0 * c / (b + disc) } else { 0.0 } } else { (-b + disc) / (2.0 * a) };
    t = t.clamp(0.0, 1.0);
    let at = |t: f64| from.iter().zip(&dir).map(|(p, v)| p + t * v).collect::<Vec<f64>>();
    let mut p = at(t);
    while dist2(&p, center) > r * r && t > 0.0 {
        t = (t * (1.0 - 4.0 * f64::EPSILON) - f64::MIN_POSITIVE).max(0.0);
        p = at(t);
    }
    p
}

/// One Lloyd step.
pub fn lloyd_step(grid: &Grid, dist: &Distribution, backend: &Backend) -> Result<Step> {
    let stats = cell_stats(grid, dist, backend)?;
    step_from_stats(grid, stats, None)
}

/// One step of the radius-bounded variant: centroids outside `B(m_X, radius)`
/// are pulled back according to `pullback`.
pub fn bounded_step(grid: &Grid, dist: &Distribution, radius: f64, backend: &Backend, pullback: Pullback) -> Result<Step> {
    let stats = cell_stats(grid, dist, backend)?;
    step_from_stats(grid, stats, Some((dist.mean(), radius, pullback)))
}

/// One row of the iteration trace, describing grid `k` and the step to `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub energy: f64,
    pub energy_gap: f64,
    pub grad_norm: f64,
    pub min_pair_dist: f64,
    pub max_displacement: f64,
    pub grid_radius: f64,
    pub pullbacks: usize,
    pub min_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ConvergedGap,
    ConvergedMove,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydTrace {
    pub rows: Vec<TraceRow>,
    pub status: Status,
    /// Some cell had zero mass at some iteration.
    pub degenerate_cell_seen: bool,
    pub final_energy: f64,
    pub final_grad_norm: f64,
    pub final_radius: f64,
    /// Steps where the energy rose above `energy(k) - gap(k)` beyond roundoff.
    pub descent_violations: usize,
    pub pullback_events: Vec<(usize, PullbackEvent)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub grid: Grid,
    pub trace: LloydTrace,
}

/// Largest distance from a generator to `center`.
pub fn grid_radius(grid: &Grid, center: &[f64]) -> f64 {
    grid.points().map(|p| dist2(p, center)).fold(0.0, f64::max).sqrt()
}

/// Roundoff allowance for energy comparisons at energy scale `e0`.
pub fn energy_slack(e0: f64) -> f64 {
    1e-13 * (1.0 + e0)
}

/// Iterates until the gap or the displacement criterion fires, or `max_iter` steps.
pub fn run(grid0: &Grid, dist: &Distribution, config: &LloydConfig) -> Result<LloydRun> {
    config.validate()?;
    if let Some(r) = config.radius_bound {
        let r0 = grid_radius(grid0, dist.mean());
        if r0 > r {
            return Err(Error::Config(format!("radius bound {r} is smaller than the initial grid radius {r0}")));
        }
    }
    let backend = &config.backend;
    let ball = config.radius_bound.map(|r| (dist.mean(), r, config.pullback));
    let mut grid = grid0.clone();
    let mut stats = cell_stats(&grid, dist, backend)?;
    let e0 = energy_from_stats(&stats);
    let tol_gap = config.tol_gap.unwrap_or(1e-18 * e0);
    let slack = energy_slack(e0);
    let mut rows = Vec::new();
    let mut status = Status::MaxIter;
    let mut degenerate = false;
    let mut violations = 0;
    let mut events = Vec::new();
    for k in 0..config.max_iter {
        let energy = energy_from_stats(&stats);
        let grad_norm = norm(&gradient_from_stats(&grid, &stats));
        let min_mass = stats.iter().map(|c| c.mass).fold(f64::INFINITY, f64::min);
        degenerate |= min_mass <= 0.0;
        let step = step_from_stats(&grid, stats, ball)?;
        let next_stats = cell_stats(&step.grid, dist, backend)?;
        let next_energy = energy_from_stats(&next_stats);
        let mc_slack = mc_energy_slack(&next_stats);
        if next_energy > energy - step.gap + slack + mc_slack {
            violations += 1;
        }
        let max_displacement =
            (0..grid.len()).map(|i| dist2(grid.point(i), step.grid.point(i))).fold(0.0, f64::max).sqrt();
        rows.push(TraceRow {
            k,
            energy,
            energy_gap: step.gap,
            grad_norm,
            min_pair_dist: min_pairwise_distance(&grid),
            max_displacement,
            grid_radius: grid_radius(&grid, dist.mean()),
            pullbacks: step.pullbacks.len(),
            min_mass,
        });
        events.extend(step.pullbacks.into_iter().map(|e| (k, e)));
        grid = step.grid;
        stats = next_stats;
        if step.gap <= tol_gap {
            status = Status::ConvergedGap;
            break;
        }
        if max_displacement <= config.tol_move {
            status = Status::ConvergedMove;
            break;
        }
    }
    degenerate |= stats.iter().any(|c| c.mass <= 0.0);
    let trace = LloydTrace {
        rows,
        status,
        degenerate_cell_seen: degenerate,
        final_energy: energy_from_stats(&stats),
        final_grad_norm: norm(&gradient_from_stats(&grid, &stats)),
        final_radius: grid_radius(&grid, dist.mean()),
        descent_violations: violations,
        pullback_events: events,
    };
    Ok(LloydRun { grid, trace })
}

fn mc_energy_slack(stats: &[CellStats]) -> f64 {
    let var: f64 = stats.iter().filter_map(|c| c.std_err.as_ref()).map(|s| s.second_moment.powi(2)).sum();
    4.0 * var.sqrt()
}

/// Observable consequences of the convergence theory, checked on a finished trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub energy_nonincreasing: bool,
    pub gaps_nonnegative: bool,
    /// `Σ_k max_displacement(k)^2`.
    pub displacement_sum: f64,
    /// `energy(0) / m*`, with `m*` the smallest cell mass seen.
    pub displacement_bound: f64,
    pub displacement_bound_ok: bool,
    pub min_pair_overall: f64,
    pub min_pair_tail: f64,
    pub min_pair_median: f64,
    /// Overall minimum positive and the trailing rows (up to ten, at most half
    /// the trace) stay above half the median.
    pub no_merging: bool,
    pub max_radius: f64,
    pub final_grad_norm: f64,
}

pub fn diagnose(trace: &LloydTrace) -> Diagnostics {
    let rows = &trace.rows;
    let e0 = rows.first().map_or(0.0, |r| r.energy);
    let slack = energy_slack(e0);
    let mut energies: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    energies.push(trace.final_energy);
    let energy_nonincreasing = energies.windows(2).all(|w| w[1] <= w[0] + slack);
    let displacement_sum: f64 = rows.iter().map(|r| r.max_displacement.powi(2)).sum();
    let m_star = rows.iter().map(|r| r.min_mass).fold(f64::INFINITY, f64::min);
    let displacement_bound = if m_star > 0.0 { e0 / m_star } else { f64::INFINITY };
    let mut pairs: Vec<f64> = rows.iter().map(|r| r.min_pair_dist).collect();
    let min_pair_overall = pairs.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_start = rows.len() - (rows.len() / 2).clamp(1, 10).min(rows.len());
    let min_pair_tail = rows[tail_start..].iter().map(|r| r.min_pair_dist).fold(f64::INFINITY, f64::min);
    pairs.sort_by(f64::total_cmp);
    let min_pair_median = pairs.get(pairs.len() / 2).copied().unwrap_or(f64::INFINITY);
    Diagnostics {
        energy_nonincreasing,
        gaps_nonnegative: rows.iter().all(|r| r.energy_gap >= 0.0),
        displacement_sum,
        displacement_bound,
        displacement_bound_ok: displacement_sum <= displacement_bound * (1.0 + 1e-12),
        min_pair_overall,
        min_pair_tail,
        min_pair_median,
        no_merging: min_pair_overall > 0.0 && min_pair_tail >= 0.5 * min_pair_median,
        max_radius: rows.iter().map(|r| r.grid_radius).fold(trace.final_radius, f64::max),
        final_grad_norm: trace.final_grad_norm,
    }
}

/// Initial grid of the next level and the candidates that were rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitInit {
    pub grid: Grid,
    pub energy: f64,
    pub previous_energy: f64,
    pub rejected: Vec<Vec<f64>>,
    pub mode: crate::measure::SplitMode,
}

const SPLIT_ATTEMPTS: usize = 64;

/// Appends one support point to `prev`, redrawing until the energy strictly drops.
pub fn split_init(prev: &Grid, dist: &Distribution, backend: &Backend, seed: u64) -> Result<SplitInit> {
    split_init_within(prev, dist, backend, seed, None)
}

/// As [`split_init`], additionally rejecting candidates outside `B(m_X, radius)`.
pub fn split_init_within(
    prev: &Grid,
    dist: &Distribution,
    backend: &Backend,
    seed: u64,
    radius: Option<f64>,
) -> Result<SplitInit> {
    let previous = distortion(prev, dist, backend)?;
    let level = prev.len() as u64 + 1;
    let mut rejected = Vec::new();
    for attempt in 0..SPLIT_ATTEMPTS {
        let draw = dist.splitting_draw(seed, (level << 20) | attempt as u64);
        let inside = radius.is_none_or(|r| dist2(&draw.point, dist.mean()) <= r * r);
        if !inside || prev.points().any(|p| p == draw.point.as_slice()) {
            rejected.push(draw.point);
            continue;
        }
        let grid = prev.with_point(&draw.point)?;
        let energy = distortion(&grid, dist, backend)?;
        if energy.value < previous.value {
            return Ok(SplitInit { grid, energy: energy.value, previous_energy: previous.value, rejected, mode: draw.mode });
        }
        rejected.push(draw.point);
    }
    Err(Error::Seeding {
        attempts: SPLIT_ATTEMPTS,
        detail: format!("level {level}: no draw lowered the energy below {}; rejected {:?}", previous.value, rejected),
    })
}

/// One rung of the splitting ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub n: usize,
    pub grid: Grid,
    pub trace: LloydTrace,
    /// Final energy of the previous level (`+∞` at level 1).
    pub upper_energy: f64,
    /// Every iterate stayed strictly below `upper_energy`.
    pub bracket_ok: bool,
}

/// Level-by-level construction from `{m_X}` up to `n_max` points.
pub fn ladder(dist: &Distribution, n_max: usize, config: &LloydConfig, seed: u64) -> Result<Vec<Level>> {
    if n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let mut levels: Vec<Level> = Vec::with_capacity(n_max);
    let mut prev_energy = f64::INFINITY;
    for n in 1..=n_max {
        let at = |e: Error| Error::AtLevel { level: n, source: Box::new(e) };
        let grid0 = match levels.last() {
            None => Grid::new(vec![dist.mean().to_vec()]).map_err(at)?,
            Some(prev) => split_init_within(&prev.grid, dist, &config.backend, seed, config.radius_bound).map_err(at)?.grid,
        };
        let out = run(&grid0, dist, config).map_err(at)?;
        let bracket_ok = out.trace.rows.iter().all(|r| r.energy < prev_energy) && out.trace.final_energy < prev_energy;
        let final_energy = out.trace.final_energy;
        levels.push(Level { n, grid: out.grid, trace: out.trace, upper_energy: prev_energy, bracket_ok });
        prev_energy = final_energy;
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{normal_cdf, normal_pdf};

    fn tight() -> LloydConfig {
        LloydConfig { tol_gap: Some(0.0), tol_move: 1e-12, ..Default::default() }
    }

    #[test]
    fn step_on_normal_pair() {
        let s = lloyd_step(&Grid::line(&[-1.0, 2.0]).unwrap(), &Distribution::standard_normal(1), &Backend::Exact1d).unwrap();
        let (p, f) = (normal_cdf(0.5), normal_pdf(0.5));
        assert!((s.grid.point(0)[0] + f / p).abs() < 1e-14);
        assert!((s.grid.point(1)[0] - f / (1.0 - p)).abs() < 1e-14);
        assert!((s.gap - 0.3942).abs() < 1e-4);
        assert!(s.pullbacks.is_empty() && s.empty_cells.is_empty());
    }

    #[test]
    fn stationary_uniform_pair_is_fixed() {
        let g = Grid::line(&[0.25, 0.75]).unwrap();
        let s = lloyd_step(&g, &Distribution::uniform01(), &Backend::Exact1d).unwrap();
        assert_eq!(s.grid, g);
        assert_eq!(s.gap, 0.0);
        let out = run(&g, &Distribution::uniform01(), &LloydConfig::default()).unwrap();
        assert_eq!(out.trace.status, Status::ConvergedGap);
        assert_eq!(out.trace.rows.len(), 1);
    }

    #[test]
    fn dead_generator_keeps_its_place() {
        let g = Grid::line(&[0.1, 5.0]).unwrap();
        let s = lloyd_step(&g, &Distribution::uniform01(), &Backend::Exact1d).unwrap();
        assert!((s.grid.point(0)[0] - 0.5).abs() < 1e-15);
        assert_eq!(s.grid.point(1)[0], 5.0);
        assert_eq!(s.empty_cells, vec![1]);
        let out = run(&g, &Distribution::uniform01(), &LloydConfig::default()).unwrap();
        assert!(out.trace.degenerate_cell_seen);
        assert_eq!(out.grid.point(1)[0], 5.0);
    }

    #[test]
    fn atoms_with_dead_generators() {
        // ties go to the lower index, so 2.0 never owns an atom
        let e = Distribution::empirical(vec![vec![1.0], vec![3.0]], None).unwrap();
        let g = Grid::line(&[0.0, 4.0, 2.0]).unwrap();
        let s = lloyd_step(&g, &e, &Backend::Atoms).unwrap();
        assert_eq!(s.grid.to_vecs(), vec![vec![1.0], vec![3.0], vec![2.0]]);
        assert_eq!(s.empty_cells, vec![2]);
        let e = Distribution::empirical(vec![vec![0.0], vec![1.0]], None).unwrap();
        let g = Grid::line(&[0.5, -0.5]).unwrap();
        let s = lloyd_step(&g, &e, &Backend::Atoms).unwrap();
        assert_eq!(s.grid.to_vecs(), vec![vec![0.5], vec![-0.5]]);
        let out = run(&Grid::line(&[1.0, 10.0]).unwrap(), &e, &LloydConfig::with_backend(Backend::Atoms)).unwrap();
        assert!(out.trace.degenerate_cell_seen);
    }

    #[test]
    fn dead_generator_on_a_centroid_is_a_merge() {
        // generator 0 sits above both atoms and wins both cells: centroid 4.0;
        // generator 1 is dead exactly at 4.0 once generator 0 is closer to all atoms.
        let e = Distribution::empirical(vec![vec![3.0], vec![5.0]], None).unwrap();
        let g = Grid::line(&[4.1, 4.0 + 10.0]).unwrap();
        let s = lloyd_step(&g, &e, &Backend::Atoms).unwrap();
        assert_eq!(s.grid.to_vecs(), vec![vec![4.0], vec![14.0]]);
        // now place the dead generator exactly there
        let stats = cell_stats(&Grid::line(&[4.1, 20.0]).unwrap(), &e, &Backend::Atoms).unwrap();
        let g = Grid::line(&[4.1, 4.0]).unwrap();
        let mut fake = stats.clone();
        fake[1] = CellStats { mass: 0.0, centroid: None, second_moment: 0.0, std_err: None };
        let err = step_from_stats(&g, fake, None).unwrap_err();
        assert_eq!(err, Error::Merge(0, 1));
    }

    #[test]
    fn segment_sphere_examples() {
        let p = segment_sphere(&[0.8], &[1.5], &[0.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[0] <= 1.0);
        assert!((p[0] - 1.5).abs() < (0.8f64 - 1.5).abs());
        let p = segment_sphere(&[0.6, 0.0], &[1.5, 0.0], &[0.0, 0.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let p = segment_sphere(&[1.0, 0.0], &[2.0, 1.0], &[0.0, 0.0], 1.0);
        assert!(dist2(&p, &[0.0, 0.0]) <= 1.0);
    }

    #[test]
    fn bounded_step_without_pullbacks_matches_plain_step() {
        let d = Distribution::standard_normal(1);
        let g = Grid::line(&[-0.5, 0.5]).unwrap();
        let a = lloyd_step(&g, &d, &Backend::Exact1d).unwrap();
        let b = bounded_step(&g, &d, 10.0, &Backend::Exact1d, Pullback::Segment).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.gap, b.gap);
        assert!(b.pullbacks.is_empty());
    }

    #[test]
    fn bounded_run_stays_in_ball() {
        let d = Distribution::standard_normal(1);
        let g = Grid::line(&[-0.95, -0.9, 0.9, 0.95]).unwrap();
        for pullback in [Pullback::Segment, Pullback::Freeze] {
            let cfg = LloydConfig { radius_bound: Some(1.0), pullback, ..tight() };
            let out = run(&g, &d, &cfg).unwrap();
            assert!(!out.trace.pullback_events.is_empty());
            assert!(out.trace.rows.iter().all(|r| r.grid_radius <= 1.0));
            assert!(out.trace.final_radius <= 1.0);
            assert_eq!(out.trace.descent_violations, 0);
            assert!(out.trace.pullback_events.iter().all(|(_, e)| e.descent >= 0.0));
            assert!(diagnose(&out.trace).energy_nonincreasing);
        }
        let cfg = LloydConfig { radius_bound: Some(0.5), ..tight() };
        assert!(matches!(run(&g, &d, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_pair_converges_to_quarter_points() {
        let u = Distribution::uniform01();
        for pts in [[0.1, 0.2], [0.9, 0.05], [0.45, 0.55]] {
            let out = run(&Grid::line(&pts).unwrap(), &u, &tight()).unwrap();
            let mut v: Vec<f64> = out.grid.coords().to_vec();
            v.sort_by(f64::total_cmp);
            assert!((v[0] - 0.25).abs() < 1e-10 && (v[1] - 0.75).abs() < 1e-10, "{v:?}");
            let diag = diagnose(&out.trace);
            assert!(diag.energy_nonincreasing && diag.gaps_nonnegative && diag.displacement_bound_ok && diag.no_merging, "{diag:?}");
        }
    }

    #[test]
    fn normal_three_points() {
        let n = Distribution::standard_normal(1);
        let out = run(&Grid::line(&[-3.0, 0.1, 3.0]).unwrap(), &n, &tight()).unwrap();
        let v = out.grid.coords();
        assert!((v[0] + 1.2240).abs() < 1e-4 && v[1].abs() < 1e-8 && (v[2] - 1.2240).abs() < 1e-4);
        assert!((out.trace.final_energy - 0.1902).abs() < 1e-4);
        assert!(out.trace.final_grad_norm < 1e-8);
    }

    #[test]
    fn split_init_lowers_energy() {
        let u = Distribution::uniform01();
        let s = split_init(&Grid::line(&[0.5]).unwrap(), &u, &Backend::Exact1d, 3).unwrap();
        assert_eq!(s.grid.len(), 2);
        assert!(s.energy < 1.0 / 12.0);
        let n = Distribution::standard_normal(1);
        let g = Grid::line(&[0.0, 1.0]).unwrap();
        let e = distortion(&g, &n, &Backend::Exact1d).unwrap().value;
        // ∫_{-∞}^{1/2} ξ² φ + ∫_{1/2}^{∞} (ξ - 1)² φ
        let oracle = {
            let a = 0.5;
            let left = normal_cdf(a) - a * normal_pdf(a);
            let right = (1.0 - normal_cdf(a)) + a * normal_pdf(a) - 2.0 * normal_pdf(a) + (1.0 - normal_cdf(a));
            left + right
        };
        assert!((e - oracle).abs() < 1e-14 && e < 1.0);
    }

    #[test]
    fn split_init_redraws_existing_points() {
        let e = Distribution::empirical(vec![vec![0.0], vec![1.0]], None).unwrap();
        let s = split_init(&Grid::line(&[0.0]).unwrap(), &e, &Backend::Atoms, 1).unwrap();
        assert_eq!(s.grid.to_vecs(), vec![vec![0.0], vec![1.0]]);
        assert!(s.rejected.iter().all(|p| p == &vec![0.0]));
        let err = split_init(&Grid::line(&[0.0, 1.0]).unwrap(), &e, &Backend::Atoms, 1).unwrap_err();
        assert_eq!(err.code(), "seeding");
    }

    #[test]
    fn ladder_levels() {
        let u = Distribution::uniform01();
        let levels = ladder(&u, 5, &tight(), 1).unwrap();
        assert!((levels[4].trace.final_energy - 1.0 / 300.0).abs() < 1e-8);
        assert!(levels.windows(2).all(|w| w[1].trace.final_energy < w[0].trace.final_energy));
        assert!(levels.iter().all(|l| l.bracket_ok));
        let n = Distribution::standard_normal(1);
        let levels = ladder(&n, 2, &tight(), 1).unwrap();
        let mut v = levels[1].grid.coords().to_vec();
        v.sort_by(f64::total_cmp);
        let c = (2.0 / std::f64::consts::PI).sqrt();
        assert!((v[0] + c).abs() < 1e-4 && (v[1] - c).abs() < 1e-4);
        let one = ladder(&n, 1, &tight(), 1).unwrap();
        assert_eq!(one[0].grid.coords(), &[0.0]);
        assert!((one[0].trace.final_energy - 1.0).abs() < 1e-15);
        assert!(ladder(&n, 0, &tight(), 1).is_err());
    }

    #[test]
    fn monte_carlo_run_descends() {
        let d = Distribution::standard_normal(2);
        let cfg = LloydConfig { backend: Backend::MonteCarlo { samples: 20_000, seed: 2 }, max_iter: 50, ..Default::default() };
        let g = Grid::new(vec![vec![-1.0, 0.0], vec![1.0, 0.2], vec![0.0, 1.5]]).unwrap();
        let out = run(&g, &d, &cfg).unwrap();
        assert_eq!(out.trace.descent_violations, 0);
        assert!(diagnose(&out.trace).energy_nonincreasing);
    }

    #[test]
    fn config_validation() {
        assert!(LloydConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(LloydConfig { tol_move: -1.0, ..Default::default() }.validate().is_err());
        assert!(LloydConfig { radius_bound: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(LloydConfig::default().validate().is_ok());
    }
}
