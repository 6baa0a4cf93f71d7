//! A-priori bound on the radius of grids with quantization error at most `c`.
//!
//! Every grid of size N with error `≤ c` lies in `B(m_X, R)` as soon as some
//! `r > 0` satisfies
//!
//! * (i)  `(R/5 - r)^2 P(X ∈ B(m_X, r)) > c^2`, and
//! * (ii) `4 ∫_{|ξ - m_X| > 2R/5} |ξ - m_X|^2 dμ < e_{N-1}^2 - c^2`.
//!
//! Both conditions are written in squared errors, matching the second-moment
//! integral on the left of (ii). Both are monotone in `R`, so the smallest
//! feasible `R` is located on a geometric grid and refined by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist2, tail_second_moment, Distribution, McParams};
use crate::voronoi::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusBound {
    pub radius: f64,
    pub r_witness: f64,
    pub c: f64,
    pub e_prev: f64,
    /// `(R/5 - r)^2 P(B(m_X, r)) - c^2`.
    pub slack_i: f64,
    /// `e_prev^2 - c^2 - 4 tail(2R/5)`.
    pub slack_ii: f64,
    pub ball_probability: f64,
    pub tail: f64,
}

const R_CANDIDATES: usize = 32;
const R_GRID: usize = 64;
const BISECTIONS: usize = 80;

struct Problem<'a> {
    dist: &'a Distribution,
    c: f64,
    e_prev: f64,
    mc: McParams,
    /// `(r, P(B(m_X, r)))` for each witness candidate.
    witnesses: Vec<(f64, f64)>,
}

impl Problem<'_> {
    fn slack_i(&self, big_r: f64) -> (f64, f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for &(r, p) in &self.witnesses {
            if r >= big_r / 5.0 {
                continue;
            }
            let s = (big_r / 5.0 - r).powi(2) * p - self.c * self.c;
            if s > best.0 {
                best = (s, r, p);
            }
        }
        best
    }

    fn slack_ii(&self, big_r: f64) -> Result<(f64, f64)> {
        let tail = tail_second_moment(self.dist, big_r, self.mc)?.value;
        Ok((self.e_prev * self.e_prev - self.c * self.c - 4.0 * tail, tail))
    }

    fn feasible(&self, big_r: f64) -> Result<bool> {
        Ok(self.slack_i(big_r).0 > 0.0 && self.slack_ii(big_r)?.0 > 0.0)
    }

    fn bound(&self, big_r: f64) -> Result<RadiusBound> {
        let (slack_i, r_witness, ball_probability) = self.slack_i(big_r);
        let (slack_ii, tail) = self.slack_ii(big_r)?;
        Ok(RadiusBound {
            radius: big_r,
            r_witness,
            c: self.c,
            e_prev: self.e_prev,
            slack_i,
            slack_ii,
            ball_probability,
            tail,
        })
    }
}

/// Smallest `R` (up to bisection accuracy) on the search grid satisfying both conditions.
pub fn solve_radius(dist: &Distribution, c: f64, e_prev: f64, mc: McParams) -> Result<RadiusBound> {
    if !(c > 0.0) || !(c <= e_prev) || !e_prev.is_finite() {
        return Err(Error::Config(format!("need 0 < c <= e_prev < ∞, got c = {c}, e_prev = {e_prev}")));
    }
    if !dist.total_variance().is_finite() {
        return Err(Error::Domain("second moment is infinite".into()));
    }
    let levels: Vec<f64> =
        (0..R_CANDIDATES).map(|i| 0.01 + (0.5 - 0.01) * i as f64 / (R_CANDIDATES - 1) as f64).collect();
    let mut radii: Vec<f64> = dist.radial_quantiles(&levels, mc)?.into_iter().filter(|&r| r > 0.0).collect();
    radii.dedup();
    if radii.is_empty() {
        return Err(Error::Domain("no positive radial quantile: the law is concentrated at its mean".into()));
    }
    let witnesses = radii
        .iter()
        .map(|&r| Ok((r, dist.ball_probability(r, mc)?.value)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&(_, p)| p > 0.0)
        .collect();
    let problem = Problem { dist, c, e_prev, mc, witnesses };
    let r_min = radii[0];
    let (lo_r, hi_r) = (5.0 * r_min, 5e3 * r_min);
    let grid: Vec<f64> =
        (0..R_GRID).map(|i| lo_r * (hi_r / lo_r).powf(i as f64 / (R_GRID - 1) as f64)).collect();
    let Some(first) = grid.iter().map(|&r| problem.feasible(r)).position(|f| matches!(f, Ok(true))) else {
        let binding = if problem.slack_i(hi_r).0 <= 0.0 { "condition (i)" } else { "condition (ii)" };
        return Err(Error::Infeasible { binding: binding.into(), ceiling: hi_r });
    };
    let mut hi = grid[first];
    if first > 0 {
        let mut lo = grid[first - 1];
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if problem.feasible(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let bound = problem.bound(hi)?;
    debug_assert!(bound.slack_i > 0.0 && bound.slack_ii > 0.0);
    Ok(bound)
}

/// Recomputes both conditions at the stored `(R, r)` and returns `(slack_i, slack_ii)`.
pub fn check_bound(dist: &Distribution, bound: &RadiusBound, mc: McParams) -> Result<(f64, f64)> {
    let p = dist.ball_probability(bound.r_witness, mc)?.value;
    let c2 = bound.c * bound.c;
    let slack_i = (bound.radius / 5.0 - bound.r_witness).powi(2) * p - c2;
    let tail = tail_second_moment(dist, bound.radius, mc)?.value;
    let slack_ii = bound.e_prev * bound.e_prev - c2 - 4.0 * tail;
    Ok((slack_i, slack_ii))
}

/// `lim_N R(N) / √(log N)` for the standard normal in dimension `d`: `(1/√2) √(1 + 2/d)`.
pub fn gaussian_radius_asymptote(d: usize) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    (0.5 * (1.0 + 2.0 / d as f64)).sqrt()
}

/// `max_i |x_i - m_X|`.
pub fn measured_radius(grid: &Grid, dist: &Distribution) -> f64 {
    grid.points().map(|p| dist2(p, dist.mean())).fold(0.0, f64::max).sqrt()
}
