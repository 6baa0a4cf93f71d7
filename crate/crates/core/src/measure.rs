//! Probability laws and the integral queries the iteration needs.
//!
//! A [`Distribution`] is immutable once built and can be shared freely
//! between threads. One-dimensional analytic families answer interval
//! mass, first moment and centered second moment in closed form; the
//! multi-dimensional and empirical kinds are reached through sampling or
//! exact atom sums.

use std::fmt;
use std::io::Read;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution as _, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::{stream_rng, Stream};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `P(a < Z < b)` for a standard normal `Z`, avoiding cancellation in the tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * normal_pdf(x)
    }
}

/// Which query machinery a distribution supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Analytic1d,
    AnalyticNd,
    Empirical,
}

/// Closed convex set containing the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Support {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    AllOfRd { dim: usize },
}

impl Support {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Support::Interval { lo, hi } => x[0] >= *lo && x[0] <= *hi,
            Support::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| v >= l && v <= h),
            Support::Ball { center, radius } => dist2(x, center) <= radius * radius,
            Support::AllOfRd { .. } => true,
        }
    }

    /// Finite bounding box, if the set is bounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Support::Interval { lo, hi } if lo.is_finite() && hi.is_finite() => {
                Some((vec![*lo], vec![*hi]))
            }
            Support::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Support::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            _ => None,
        }
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user-supplied one-dimensional law, typically log-concave.
///
/// `partial_first_moment(a, b)` must return `∫_a^b ξ ρ(ξ) dξ`. Centered
/// second moments fall back to adaptive quadrature of the density.
#[derive(Clone)]
pub struct Custom1d {
    pub name: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub density: Fn1,
    pub cdf: Fn1,
    pub partial_first_moment: Fn2,
}

impl fmt::Debug for Custom1d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom1d")
            .field("name", &self.name)
            .field("mean", &self.mean)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish_non_exhaustive()
    }
}

/// Weighted atoms.
#[derive(Debug, Clone)]
pub struct Empirical {
    pub(crate) points: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Empirical {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, dim: usize, i: usize) -> &[f64] {
        &self.points[i * dim..(i + 1) * dim]
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Exponential { rate: f64 },
    Custom(Custom1d),
    Empirical(Empirical),
}

/// A Monte Carlo estimate with its standard error. Exact values carry `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_err: None }
    }
}

/// Sample budget for estimates that have no closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McParams {
    fn default() -> Self {
        McParams { samples: 200_000, seed: 0 }
    }
}

/// Interval mass and partial first moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalStats {
    pub mass: f64,
    pub first_moment: f64,
}

/// How a splitting candidate was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// From the law with density proportional to `ρ^{d/(d+2)}`.
    Tilted,
    /// From the law itself (empirical measures).
    Law,
    /// From the law itself because the tilt is not available.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDraw {
    pub point: Vec<f64>,
    pub mode: SplitMode,
}

/// A probability law on `R^d` with finite second moment.
#[derive(Debug, Clone)]
pub struct Distribution {
    family: Family,
    dim: usize,
    mean: Vec<f64>,
    support: Support,
}

impl Distribution {
    /// The uniform law on the box `[lo, hi]`.
    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Config("uniform box needs matching non-empty bounds".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Config("uniform box needs finite lo < hi componentwise".into()));
        }
        let dim = lo.len();
        let mean = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let support = if dim == 1 {
            Support::Interval { lo: lo[0], hi: hi[0] }
        } else {
            Support::Box { lo: lo.clone(), hi: hi.clone() }
        };
        Ok(Distribution { family: Family::Uniform { lo, hi }, dim, mean, support })
    }

    pub fn uniform01() -> Self {
        Self::uniform(vec![0.0], vec![1.0]).expect("valid box")
    }

    /// `N(mean, diag(std^2))`.
    pub fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::Config("gaussian needs matching non-empty mean and std".into()));
        }
        if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("gaussian needs finite mean and positive std".into()));
        }
        let dim = mean.len();
        let support = if dim == 1 {
            Support::Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
        } else {
            Support::AllOfRd { dim }
        };
        Ok(Distribution { family: Family::Gaussian { mean: mean.clone(), std }, dim, mean, support })
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::gaussian(vec![0.0; dim], vec![1.0; dim]).expect("valid gaussian")
    }

    /// Exponential law with the given rate on `[0, ∞)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Config("exponential rate must be positive".into()));
        }
        Ok(Distribution {
            family: Family::Exponential { rate },
            dim: 1,
            mean: vec![1.0 / rate],
            support: Support::Interval { lo: 0.0, hi: f64::INFINITY },
        })
    }

    pub fn custom1d(custom: Custom1d) -> Result<Self> {
        if !(custom.lo < custom.hi) {
            return Err(Error::Config(format!("{}: support needs lo < hi", custom.name)));
        }
        let dist = Distribution {
            dim: 1,
            mean: vec![custom.mean],
            support: Support::Interval { lo: custom.lo, hi: custom.hi },
            family: Family::Custom(custom),
        };
        let var = dist.interval_second_moment(f64::NEG_INFINITY, f64::INFINITY, dist.mean[0])?;
        if !var.is_finite() {
            return Err(Error::Domain("second moment is not finite".into()));
        }
        Ok(dist)
    }

    /// Weighted atoms; weights default to uniform and are normalized.
    pub fn empirical(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Config("empirical measure needs at least one point".into()));
        }
        if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("empirical points must share a dimension and be finite".into()));
        }
        let n = points.len();
        let mut weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::Config("weight column length mismatch".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("empirical weights must be strictly positive".into()));
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let flat: Vec<f64> = points.into_iter().flatten().collect();
        let mut mean = vec![0.0; dim];
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (i, w) in weights.iter().enumerate() {
            for k in 0..dim {
                let v = flat[i * dim + k];
                mean[k] += w * v;
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let support = if dim == 1 {
            Support::Interval { lo: lo[0], hi: hi[0] }
        } else {
            Support::Box { lo, hi }
        };
        Ok(Distribution {
            family: Family::Empirical(Empirical { points: flat, weights, cumulative }),
            dim,
            mean,
            support,
        })
    }

    /// Reads an empirical measure from CSV: columns `x1..xd[,weight]`.
    ///
    /// A header row is optional and recognised by a non-numeric first field;
    /// a trailing column named `weight` (or `w`) is taken as the weights.
    pub fn from_csv<R: Read>(reader: R, dim: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut weighted = false;
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Config(format!("csv: {e}")))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if line == 0 && rows.is_empty() => {
                    let last = record.iter().next_back().unwrap_or("").to_ascii_lowercase();
                    weighted = last == "weight" || last == "w";
                }
                Err(e) => return Err(Error::Config(format!("csv line {}: {e}", line + 1))),
            }
        }
        let width = rows.first().map(Vec::len).ok_or_else(|| Error::Config("csv has no data rows".into()))?;
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Config("csv rows have differing column counts".into()));
        }
        if let Some(d) = dim {
            if width == d + 1 {
                weighted = true;
            } else if width != d {
                return Err(Error::Config(format!("csv has {width} columns, expected {d} or {}", d + 1)));
            }
        }
        if weighted {
            if width < 2 {
                return Err(Error::Config("weight column without coordinates".into()));
            }
            let weights = rows.iter().map(|r| r[width - 1]).collect();
            let points = rows.into_iter().map(|mut r| {
                r.pop();
                r
            });
            Self::empirical(points.collect(), Some(weights))
        } else {
            Self::empirical(rows, None)
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn kind(&self) -> Kind {
        match self.family {
            Family::Empirical(_) => Kind::Empirical,
            _ if self.dim == 1 => Kind::Analytic1d,
            _ => Kind::AnalyticNd,
        }
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match &self.family {
            Family::Uniform { lo, hi } => format!("uniform{lo:?}x{hi:?}"),
            Family::Gaussian { mean, std } => format!("gaussian(mean={mean:?}, std={std:?})"),
            Family::Exponential { rate } => format!("exponential(rate={rate})"),
            Family::Custom(c) => c.name.clone(),
            Family::Empirical(e) => format!("empirical({} atoms, d={})", e.len(), self.dim),
        }
    }

    /// Density at `x`, when the law is absolutely continuous.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match &self.family {
            Family::Uniform { lo, hi } => {
                let vol: f64 = lo.iter().zip(hi).map(|(l, h)| h - l).product();
                Some(if self.support.contains(x) { 1.0 / vol } else { 0.0 })
            }
            Family::Gaussian { mean, std } => Some(
                mean.iter()
                    .zip(std)
                    .zip(x)
                    .map(|((m, s), v)| normal_pdf((v - m) / s) / s)
                    .product(),
            ),
            Family::Exponential { rate } => Some(if x[0] >= 0.0 { rate * (-rate * x[0]).exp() } else { 0.0 }),
            Family::Custom(c) => Some((c.density)(x[0])),
            Family::Empirical(_) => None,
        }
    }

    /// Distribution function in one dimension.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match &self.family {
            Family::Uniform { lo, hi } if self.dim == 1 => Ok(((x - lo[0]) / (hi[0] - lo[0])).clamp(0.0, 1.0)),
            Family::Gaussian { mean, std } if self.dim == 1 => Ok(normal_cdf((x - mean[0]) / std[0])),
            Family::Exponential { rate } => Ok(if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() }),
            Family::Custom(c) => Ok((c.cdf)(x).clamp(0.0, 1.0)),
            _ => Err(Error::UnsupportedBackend("cdf needs a one-dimensional analytic law".into())),
        }
    }

    /// Mass and first moment of `(a, b)`.
    pub fn interval_stats(&self, a: f64, b: f64) -> Result<IntervalStats> {
        if self.kind() != Kind::Analytic1d {
            return Err(Error::UnsupportedBackend("interval statistics need a one-dimensional analytic law".into()));
        }
        if a.is_nan() || b.is_nan() || a > b {
            return Err(Error::Config(format!("interval needs a <= b, got ({a}, {b})")));
        }
        if a == b {
            return Ok(IntervalStats { mass: 0.0, first_moment: 0.0 });
        }
        Ok(match &self.family {
            Family::Uniform { lo, hi } => {
                let (l, h) = (a.max(lo[0]), b.min(hi[0]));
                if l >= h {
                    IntervalStats { mass: 0.0, first_moment: 0.0 }
                } else {
                    let width = hi[0] - lo[0];
                    IntervalStats { mass: (h - l) / width, first_moment: (h - l) * (h + l) / (2.0 * width) }
                }
            }
            Family::Gaussian { mean, std } => {
                let (m, s) = (mean[0], std[0]);
                let (za, zb) = ((a - m) / s, (b - m) / s);
                let mass = normal_mass(za, zb);
                IntervalStats { mass, first_moment: m * mass + s * (normal_pdf(za) - normal_pdf(zb)) }
            }
            Family::Exponential { rate } => {
                let l = a.max(0.0);
                if l >= b {
                    IntervalStats { mass: 0.0, first_moment: 0.0 }
                } else {
                    let el = (-rate * l).exp();
                    let eh = if b.is_finite() { (-rate * b).exp() } else { 0.0 };
                    let tail_h = if b.is_finite() { (b + 1.0 / rate) * eh } else { 0.0 };
                    let mass = if b.is_finite() { el * -(-rate * (b - l)).exp_m1() } else { el };
                    IntervalStats { mass, first_moment: (l + 1.0 / rate) * el - tail_h }
                }
            }
            Family::Custom(c) => {
                let (l, h) = (a.max(c.lo), b.min(c.hi));
                if l >= h {
                    IntervalStats { mass: 0.0, first_moment: 0.0 }
                } else {
                    IntervalStats {
                        mass: ((c.cdf)(h) - (c.cdf)(l)).max(0.0),
                        first_moment: (c.partial_first_moment)(l, h),
                    }
                }
            }
            Family::Empirical(_) => unreachable!("checked above"),
        })
    }

    /// `∫_a^b (ξ - center)^2 ρ(ξ) dξ` for one-dimensional analytic laws.
    pub fn interval_second_moment(&self, a: f64, b: f64, center: f64) -> Result<f64> {
        if self.kind() != Kind::Analytic1d {
            return Err(Error::UnsupportedBackend("interval moments need a one-dimensional analytic law".into()));
        }
        if a >= b {
            return Ok(0.0);
        }
        Ok(match &self.family {
            Family::Uniform { lo, hi } => {
                let (l, h) = (a.max(lo[0]), b.min(hi[0]));
                if l >= h {
                    0.0
                } else {
                    ((h - center).powi(3) - (l - center).powi(3)) / (3.0 * (hi[0] - lo[0]))
                }
            }
            Family::Gaussian { mean, std } => {
                let (m, s) = (mean[0], std[0]);
                let (za, zb) = ((a - m) / s, (b - m) / s);
                let mass = normal_mass(za, zb);
                let z1 = normal_pdf(za) - normal_pdf(zb);
                let z2 = mass + x_pdf(za) - x_pdf(zb);
                let shift = m - center;
                s * s * z2 + 2.0 * s * shift * z1 + shift * shift * mass
            }
            Family::Exponential { rate } => {
                let l = a.max(0.0);
                if l >= b {
                    0.0
                } else {
                    let prim = |x: f64| {
                        if x.is_infinite() {
                            0.0
                        } else {
                            let u = x - center;
                            (-rate * x).exp() * (u * u + 2.0 * u / rate + 2.0 / (rate * rate))
                        }
                    };
                    prim(l) - prim(b)
                }
            }
            Family::Custom(c) => {
                let (l, h) = (a.max(c.lo), b.min(c.hi));
                if l >= h {
                    0.0
                } else {
                    let density = c.density.clone();
                    quadrature::integrate(move |x| (x - center) * (x - center) * density(x), l, h, 1e-13)?
                }
            }
            Family::Empirical(_) => unreachable!("checked above"),
        })
    }

    /// `E|X - m_X|^2`.
    pub fn total_variance(&self) -> f64 {
        match &self.family {
            Family::Uniform { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l) / 12.0).sum(),
            Family::Gaussian { std, .. } => std.iter().map(|s| s * s).sum(),
            Family::Exponential { rate } => 1.0 / (rate * rate),
            Family::Custom(_) => self
                .interval_second_moment(f64::NEG_INFINITY, f64::INFINITY, self.mean[0])
                .unwrap_or(f64::NAN),
            Family::Empirical(e) => (0..e.len())
                .map(|i| e.weights[i] * dist2(e.point(self.dim, i), &self.mean))
                .sum(),
        }
    }

    /// `n` i.i.d. draws as a flat row-major buffer of `n * dim` values.
    pub fn sample_flat(&self, n: usize, seed: u64, stream: Stream, index: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let mut rng = stream_rng(seed, stream, index);
        let mut out = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            self.draw_into(&mut rng, &mut out);
        }
        Ok(out)
    }

    /// `n` i.i.d. draws, deterministic in `(n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let flat = self.sample_flat(n, seed, Stream::Integration, 0)?;
        Ok(flat.chunks(self.dim).map(<[f64]>::to_vec).collect())
    }

    fn draw_into<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match &self.family {
            Family::Uniform { lo, hi } => {
                for (l, h) in lo.iter().zip(hi) {
                    let u: f64 = rng.random();
                    out.push(l + (h - l) * u);
                }
            }
            Family::Gaussian { mean, std } => {
                for (m, s) in mean.iter().zip(std) {
                    let z: f64 = StandardNormal.sample(rng);
                    out.push(m + s * z);
                }
            }
            Family::Exponential { rate } => {
                out.push(Exp::new(*rate).expect("positive rate").sample(rng));
            }
            Family::Custom(c) => {
                let u: f64 = rng.random();
                out.push(invert_cdf(c, u));
            }
            Family::Empirical(e) => {
                let u: f64 = rng.random();
                let i = e.cumulative.partition_point(|&c| c <= u).min(e.len() - 1);
                out.extend_from_slice(e.point(self.dim, i));
            }
        }
    }

    /// One splitting candidate for draw number `index`.
    ///
    /// Analytic families with a known tilted law sample it; everything else
    /// samples the law itself.
    pub fn splitting_draw(&self, seed: u64, index: u64) -> SplitDraw {
        let mut rng = stream_rng(seed, Stream::Splitting, index);
        let d = self.dim as f64;
        let power = d / (d + 2.0);
        let mut point = Vec::with_capacity(self.dim);
        let mode = match &self.family {
            Family::Uniform { .. } => {
                self.draw_into(&mut rng, &mut point);
                SplitMode::Tilted
            }
            Family::Gaussian { mean, std } => {
                let inflate = (1.0 / power).sqrt();
                for (m, s) in mean.iter().zip(std) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    point.push(m + s * inflate * z);
                }
                SplitMode::Tilted
            }
            Family::Exponential { rate } => {
                point.push(Exp::new(rate * power).expect("positive rate").sample(&mut rng));
                SplitMode::Tilted
            }
            Family::Custom(_) => {
                self.draw_into(&mut rng, &mut point);
                SplitMode::Fallback
            }
            Family::Empirical(_) => {
                self.draw_into(&mut rng, &mut point);
                SplitMode::Law
            }
        };
        SplitDraw { point, mode }
    }

    /// `∫_{|ξ - m_X| > t} |ξ - m_X|^2 μ(dξ)` for the ball radius `t`.
    pub fn second_moment_outside(&self, t: f64, mc: McParams) -> Result<Estimate> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Config(format!("ball radius must be nonnegative, got {t}")));
        }
        let m = self.mean.clone();
        match (&self.family, self.kind()) {
            (_, Kind::Analytic1d) => {
                let left = self.interval_second_moment(f64::NEG_INFINITY, m[0] - t, m[0])?;
                let right = self.interval_second_moment(m[0] + t, f64::INFINITY, m[0])?;
                let v = (left + right).max(0.0);
                if v.is_finite() {
                    Ok(Estimate::exact(v))
                } else {
                    Err(Error::Domain("second moment diverges".into()))
                }
            }
            (Family::Empirical(e), _) => Ok(Estimate::exact(
                (0..e.len())
                    .map(|i| {
                        let r2 = dist2(e.point(self.dim, i), &m);
                        if r2 > t * t {
                            e.weights[i] * r2
                        } else {
                            0.0
                        }
                    })
                    .sum(),
            )),
            _ => {
                if let Some((lo, hi)) = self.support.bounding_box() {
                    let far: f64 = lo
                        .iter()
                        .zip(&hi)
                        .zip(&m)
                        .map(|((l, h), c)| (c - l).abs().max((h - c).abs()).powi(2))
                        .sum();
                    if far <= t * t {
                        return Ok(Estimate::exact(0.0));
                    }
                }
                let xs = self.sample_flat(mc.samples, mc.seed, Stream::Auxiliary, 1)?;
                let vals = xs.chunks(self.dim).map(|x| {
                    let r2 = dist2(x, &m);
                    if r2 > t * t {
                        r2
                    } else {
                        0.0
                    }
                });
                Ok(mean_with_error(vals, mc.samples))
            }
        }
    }

    /// `P(|X - m_X| < r)`.
    pub fn ball_probability(&self, r: f64, mc: McParams) -> Result<Estimate> {
        let m = self.mean.clone();
        match (&self.family, self.kind()) {
            (_, Kind::Analytic1d) => {
                let s = self.interval_stats(m[0] - r, m[0] + r)?;
                Ok(Estimate::exact(s.mass))
            }
            (Family::Empirical(e), _) => Ok(Estimate::exact(
                (0..e.len())
                    .filter(|&i| dist2(e.point(self.dim, i), &m) < r * r)
                    .map(|i| e.weights[i])
                    .sum(),
            )),
            _ => {
                let xs = self.sample_flat(mc.samples, mc.seed, Stream::Auxiliary, 2)?;
                let vals = xs.chunks(self.dim).map(|x| if dist2(x, &m) < r * r { 1.0 } else { 0.0 });
                Ok(mean_with_error(vals, mc.samples))
            }
        }
    }

    /// Radii `r_q` with `P(|X - m_X| <= r_q) ≈ q` for each requested level.
    pub fn radial_quantiles(&self, levels: &[f64], mc: McParams) -> Result<Vec<f64>> {
        let m = self.mean.clone();
        match (&self.family, self.kind()) {
            (_, Kind::Analytic1d) => levels
                .iter()
                .map(|&q| {
                    let mut hi = 1.0;
                    while self.ball_probability(hi, mc)?.value < q {
                        hi *= 2.0;
                        if hi > 1e12 {
                            return Err(Error::Domain("radial quantile diverges".into()));
                        }
                    }
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if self.ball_probability(mid, mc)?.value < q {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    Ok(hi)
                })
                .collect(),
            (Family::Empirical(e), _) => {
                let mut radii: Vec<(f64, f64)> =
                    (0..e.len()).map(|i| (dist2(e.point(self.dim, i), &m).sqrt(), e.weights[i])).collect();
                radii.sort_by(|a, b| a.0.total_cmp(&b.0));
                Ok(levels
                    .iter()
                    .map(|&q| {
                        let mut acc = 0.0;
                        for &(r, w) in &radii {
                            acc += w;
                            if acc >= q {
                                return r;
                            }
                        }
                        radii.last().map(|p| p.0).unwrap_or(0.0)
                    })
                    .collect())
            }
            _ => {
                let xs = self.sample_flat(mc.samples, mc.seed, Stream::Auxiliary, 3)?;
                let mut radii: Vec<f64> = xs.chunks(self.dim).map(|x| dist2(x, &m).sqrt()).collect();
                radii.sort_by(f64::total_cmp);
                Ok(levels
                    .iter()
                    .map(|&q| radii[((q * radii.len() as f64) as usize).min(radii.len() - 1)])
                    .collect())
            }
        }
    }
}

/// Tail integral used by the a-priori radius condition: the second moment
/// outside the ball `B(m_X, 2R/5)`.
pub fn tail_second_moment(dist: &Distribution, big_r: f64, mc: McParams) -> Result<Estimate> {
    if big_r.is_nan() || big_r < 0.0 {
        return Err(Error::Config(format!("R must be nonnegative, got {big_r}")));
    }
    dist.second_moment_outside(0.4 * big_r, mc)
}

pub(crate) fn mean_with_error<I: Iterator<Item = f64>>(values: I, n: usize) -> Estimate {
    let (mut s, mut s2) = (0.0, 0.0);
    for v in values {
        s += v;
        s2 += v * v;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 / nf) - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    Estimate { value: mean, std_err: Some((var / nf).sqrt()) }
}

fn invert_cdf(c: &Custom1d, u: f64) -> f64 {
    let mut lo = if c.lo.is_finite() { c.lo } else { c.mean - 1.0 };
    let mut hi = if c.hi.is_finite() { c.hi } else { c.mean + 1.0 };
    let mut step = 1.0;
    while !c.lo.is_finite() && (c.cdf)(lo) > u {
        step *= 2.0;
        lo = c.mean - step;
    }
    step = 1.0;
    while !c.hi.is_finite() && (c.cdf)(hi) < u {
        step *= 2.0;
        hi = c.mean + step;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (c.cdf)(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Serializable description of a built-in family, as used in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Exponential { rate: f64 },
    /// Points read from a CSV file (`x1..xd[,weight]`).
    Empirical { path: String, dim: Option<usize> },
}

impl DistributionSpec {
    /// Builds the law. Empirical specs read their CSV from disk.
    pub fn build(&self) -> Result<Distribution> {
        match self {
            DistributionSpec::Uniform { lo, hi } => Distribution::uniform(lo.clone(), hi.clone()),
            DistributionSpec::Gaussian { mean, std } => Distribution::gaussian(mean.clone(), std.clone()),
            DistributionSpec::Exponential { rate } => Distribution::exponential(*rate),
            DistributionSpec::Empirical { path, dim } => {
                let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
                Distribution::from_csv(file, *dim)
            }
        }
    }

    /// Parses preset names: `uniform01`, `uniform2d`, `gauss1d`, `gauss2d`,
    /// `gauss:<d>`, `exp:<rate>`, `uniform:<lo>,<hi>`, `gauss:<mean>,<std>`.
    pub fn parse_name(name: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown distribution '{name}'"));
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
        };
        Ok(match name {
            "uniform01" | "uniform" => DistributionSpec::Uniform { lo: vec![0.0], hi: vec![1.0] },
            "uniform2d" => DistributionSpec::Uniform { lo: vec![0.0; 2], hi: vec![1.0; 2] },
            "gauss1d" | "gauss" | "normal" => DistributionSpec::Gaussian { mean: vec![0.0], std: vec![1.0] },
            "gauss2d" => DistributionSpec::Gaussian { mean: vec![0.0; 2], std: vec![1.0; 2] },
            "exp" | "exponential" => DistributionSpec::Exponential { rate: 1.0 },
            _ => {
                let (head, tail) = name.split_once(':').ok_or_else(bad)?;
                let v = nums(tail)?;
                match (head, v.as_slice()) {
                    ("exp" | "exponential", [rate]) => DistributionSpec::Exponential { rate: *rate },
                    ("uniform", [lo, hi]) => DistributionSpec::Uniform { lo: vec![*lo], hi: vec![*hi] },
                    ("gauss" | "normal", [d]) if d.fract() == 0.0 && *d >= 1.0 => {
                        DistributionSpec::Gaussian { mean: vec![0.0; *d as usize], std: vec![1.0; *d as usize] }
                    }
                    ("gauss" | "normal", [m, s]) => DistributionSpec::Gaussian { mean: vec![*m], std: vec![*s] },
                    _ => return Err(bad()),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic() -> Distribution {
        Distribution::custom1d(Custom1d {
            name: "logistic".into(),
            mean: 0.0,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            density: Arc::new(|x: f64| {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }),
            cdf: Arc::new(|x: f64| 1.0 / (1.0 + (-x).exp())),
            partial_first_moment: Arc::new(|a: f64, b: f64| {
                // ∫ x ρ = x F(x) - ln(1 + e^x)
                let prim = |x: f64| {
                    if x.is_infinite() {
                        0.0
                    } else {
                        let f = 1.0 / (1.0 + (-x).exp());
                        let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
                        x * f - softplus
                    }
                };
                let pa = if a == f64::NEG_INFINITY { 0.0 } else { prim(a) };
                let pb = if b == f64::INFINITY { 0.0 } else { prim(b) };
                pb - pa
            }),
        })
        .unwrap()
    }

    #[test]
    fn uniform_interval_stats() {
        let u = Distribution::uniform01();
        let s = u.interval_stats(0.25, 0.75).unwrap();
        assert!((s.mass - 0.5).abs() < 1e-15);
        assert!((s.first_moment - 0.25).abs() < 1e-15);
        let s = u.interval_stats(0.3, 0.3).unwrap();
        assert_eq!((s.mass, s.first_moment), (0.0, 0.0));
    }

    #[test]
    fn normal_half_line_stats() {
        let g = Distribution::standard_normal(1);
        let s = g.interval_stats(f64::NEG_INFINITY, 0.0).unwrap();
        assert!((s.mass - 0.5).abs() < 1e-15);
        assert!((s.first_moment + 0.398_942_280_4).abs() < 1e-10);
        let s = g.interval_stats(1.5, 1.5).unwrap();
        assert_eq!((s.mass, s.first_moment), (0.0, 0.0));
    }

    #[test]
    fn interval_stats_rejects_other_kinds() {
        let g = Distribution::standard_normal(2);
        assert!(matches!(g.interval_stats(0.0, 1.0), Err(Error::UnsupportedBackend(_))));
        let e = Distribution::empirical(vec![vec![1.0], vec![3.0]], None).unwrap();
        assert!(matches!(e.interval_stats(0.0, 1.0), Err(Error::UnsupportedBackend(_))));
        assert!(Distribution::uniform01().interval_stats(1.0, 0.0).is_err());
    }

    #[test]
    fn tail_second_moment_values() {
        let mc = McParams::default();
        let g = Distribution::standard_normal(1);
        let full = tail_second_moment(&g, 0.0, mc).unwrap().value;
        assert!((full - 1.0).abs() < 1e-14);
        // oracle: 2 (t φ(t) + 1 - Φ(t)) at t = 1
        let t = 1.0;
        let oracle = 2.0 * (t * normal_pdf(t) + 1.0 - normal_cdf(t));
        let v = tail_second_moment(&g, 2.5, mc).unwrap().value;
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.8012).abs() < 1e-4);
        let u = Distribution::uniform01();
        assert_eq!(tail_second_moment(&u, 1.25, mc).unwrap().value, 0.0);
        assert!((tail_second_moment(&u, 0.0, mc).unwrap().value - 1.0 / 12.0).abs() < 1e-15);
        assert!(tail_second_moment(&u, -1.0, mc).is_err());
    }

    #[test]
    fn tail_is_monotone_in_radius() {
        let mc = McParams { samples: 20_000, seed: 3 };
        for dist in [Distribution::standard_normal(1), Distribution::exponential(2.0).unwrap(), logistic()] {
            let mut prev = f64::INFINITY;
            let first = tail_second_moment(&dist, 0.0, mc).unwrap().value;
            for k in 0..200 {
                let v = tail_second_moment(&dist, 0.25 * k as f64, mc).unwrap().value;
                assert!(v <= prev + 1e-15, "{} at {k}", dist.label());
                prev = v;
            }
            assert!(prev < 1e-4 * first, "{}: {prev}", dist.label());
        }
        let g2 = Distribution::standard_normal(2);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let v = tail_second_moment(&g2, 0.5 * k as f64, mc).unwrap().value;
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn sample_mean_and_support() {
        let g = Distribution::standard_normal(1);
        let xs = g.sample(1_000_000, 7).unwrap();
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.004, "mean {mean}");
        let u = Distribution::uniform01();
        assert!(u.sample(10_000, 99).unwrap().iter().all(|x| (0.0..=1.0).contains(&x[0])));
        let e = Distribution::empirical(vec![vec![1.0], vec![3.0]], Some(vec![0.5, 0.5])).unwrap();
        let xs = e.sample(100_000, 1).unwrap();
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0).abs() < 0.05);
        assert!(xs.iter().all(|x| x[0] == 1.0 || x[0] == 3.0));
        assert!(g.sample(0, 1).is_err());
    }

    #[test]
    fn sampling_is_bitwise_reproducible() {
        let g = Distribution::gaussian(vec![1.0, -2.0], vec![0.5, 3.0]).unwrap();
        assert_eq!(g.sample(1000, 11).unwrap(), g.sample(1000, 11).unwrap());
        assert_ne!(g.sample(1000, 11).unwrap(), g.sample(1000, 12).unwrap());
    }

    fn ks_distance(dist: &Distribution, seed: u64, n: usize) -> f64 {
        let mut xs: Vec<f64> = dist.sample(n, seed).unwrap().into_iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = dist.cdf(x).unwrap();
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn kolmogorov_smirnov_against_cdf() {
        let n = 100_000;
        let critical = 1.628 / (n as f64).sqrt();
        let dists = [
            Distribution::uniform01(),
            Distribution::standard_normal(1),
            Distribution::gaussian(vec![3.0], vec![0.2]).unwrap(),
            Distribution::exponential(1.5).unwrap(),
            logistic(),
        ];
        for d in &dists {
            let ks = ks_distance(d, 5, n);
            assert!(ks < critical, "{}: {ks} >= {critical}", d.label());
        }
    }

    #[test]
    fn cdf_is_monotone_with_limits() {
        for d in [Distribution::uniform01(), Distribution::standard_normal(1), Distribution::exponential(0.7).unwrap(), logistic()] {
            let mut prev = 0.0;
            for k in -400..=400 {
                let f = d.cdf(k as f64 * 0.05).unwrap();
                assert!(f >= prev);
                prev = f;
            }
            assert!(d.cdf(-1e6).unwrap() < 1e-12);
            assert!(d.cdf(1e6).unwrap() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_interval_mass() {
        let dists = [
            Distribution::uniform(vec![-1.0], vec![2.0]).unwrap(),
            Distribution::gaussian(vec![0.5], vec![1.7]).unwrap(),
            Distribution::exponential(2.0).unwrap(),
            logistic(),
        ];
        let mut rng = stream_rng(17, Stream::Probe, 0);
        for d in &dists {
            for _ in 0..100 {
                let a: f64 = rng.random_range(-3.0..3.0);
                let b: f64 = a + rng.random_range(0.0..3.0);
                // split at the support edges: adaptive rules cannot see a jump between nodes
                let (lo, hi) = match d.support() {
                    Support::Interval { lo, hi } => (lo.clamp(a, b), hi.clamp(a, b)),
                    _ => (a, b),
                };
                let piecewise = |g: &dyn Fn(f64) -> f64, tol: f64| -> f64 {
                    [(a, lo), (lo, hi), (hi, b)].iter().map(|&(s, t)| quadrature::integrate(g, s, t, tol).unwrap()).sum()
                };
                let q = piecewise(&|x| d.density(&[x]).unwrap(), 1e-10);
                let exact = d.cdf(b).unwrap() - d.cdf(a).unwrap();
                assert!((q - exact).abs() < 1e-8, "{}: [{a},{b}] {q} vs {exact}", d.label());
                let s = d.interval_stats(a, b).unwrap();
                let m1 = piecewise(&|x| x * d.density(&[x]).unwrap(), 1e-11);
                assert!((s.first_moment - m1).abs() < 1e-8);
                let c = 0.3;
                let m2 = piecewise(&|x| (x - c) * (x - c) * d.density(&[x]).unwrap(), 1e-11);
                assert!((d.interval_second_moment(a, b, c).unwrap() - m2).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn splitting_tilt_for_gaussian_inflates_variance() {
        for dim in [1usize, 2, 3] {
            let g = Distribution::standard_normal(dim);
            let n = 200_000;
            let mut s2 = 0.0;
            for i in 0..n {
                let p = g.splitting_draw(4, i as u64);
                assert_eq!(p.mode, SplitMode::Tilted);
                s2 += p.point.iter().map(|v| v * v).sum::<f64>();
            }
            let var = s2 / (n as f64 * dim as f64);
            let expected = (dim as f64 + 2.0) / dim as f64;
            // variance of a squared normal is 2 sigma^4; 5 standard errors
            let se = (2.0 / (n as f64 * dim as f64)).sqrt() * expected;
            assert!((var - expected).abs() < 5.0 * se, "d={dim}: {var} vs {expected}");
        }
        let u = Distribution::uniform01();
        let p = u.splitting_draw(1, 0);
        assert_eq!(p.mode, SplitMode::Tilted);
        assert!((0.0..=1.0).contains(&p.point[0]));
        let e = Distribution::empirical(vec![vec![1.0], vec![2.0]], None).unwrap();
        let p = e.splitting_draw(1, 0);
        assert_eq!(p.mode, SplitMode::Law);
        assert!(p.point[0] == 1.0 || p.point[0] == 2.0);
        assert_eq!(logistic().splitting_draw(1, 0).mode, SplitMode::Fallback);
    }

    #[test]
    fn empirical_weights_normalized() {
        let e = Distribution::empirical(vec![vec![0.0], vec![1.0], vec![2.0]], Some(vec![1.0, 2.0, 1.0])).unwrap();
        if let Family::Empirical(emp) = e.family() {
            assert!((emp.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(emp.weights().iter().all(|w| *w > 0.0));
        }
        assert!((e.mean()[0] - 1.0).abs() < 1e-15);
        assert!(Distribution::empirical(vec![vec![0.0]], Some(vec![0.0])).is_err());
        assert!(Distribution::empirical(vec![vec![0.0], vec![1.0, 2.0]], None).is_err());
    }

    #[test]
    fn csv_ingestion_with_and_without_header() {
        let data = "x1,x2,weight\n0.0,0.0,1\n1.0,0.5,3\n";
        let d = Distribution::from_csv(data.as_bytes(), None).unwrap();
        assert_eq!(d.dim(), 2);
        assert!((d.mean()[0] - 0.75).abs() < 1e-15);
        let d = Distribution::from_csv("1.5\n2.5\n".as_bytes(), None).unwrap();
        assert_eq!(d.dim(), 1);
        assert!((d.mean()[0] - 2.0).abs() < 1e-15);
        let d = Distribution::from_csv("1.5,1\n2.5,3\n".as_bytes(), Some(1)).unwrap();
        assert!((d.mean()[0] - 2.25).abs() < 1e-15);
        assert!(Distribution::from_csv("1,2\n3\n".as_bytes(), None).is_err());
        assert!(Distribution::from_csv("a,b\nx,y\n".as_bytes(), None).is_err());
    }

    #[test]
    fn preset_names() {
        assert_eq!(
            DistributionSpec::parse_name("gauss:3").unwrap(),
            DistributionSpec::Gaussian { mean: vec![0.0; 3], std: vec![1.0; 3] }
        );
        assert_eq!(DistributionSpec::parse_name("exp:2").unwrap(), DistributionSpec::Exponential { rate: 2.0 });
        assert!(DistributionSpec::parse_name("cauchy").is_err());
        let spec: DistributionSpec = serde_json::from_str(r#"{"family":"uniform","lo":[0],"hi":[2]}"#).unwrap();
        assert_eq!(spec.build().unwrap().mean(), &[1.0]);
    }

    #[test]
    fn support_shapes() {
        assert!(Support::Ball { center: vec![0.0, 0.0], radius: 1.0 }.contains(&[0.6, 0.6]));
        assert!(!Support::Ball { center: vec![0.0, 0.0], radius: 1.0 }.contains(&[0.8, 0.8]));
        assert!(Support::Box { lo: vec![0.0; 2], hi: vec![1.0; 2] }.contains(&[1.0, 0.0]));
        assert!(Support::AllOfRd { dim: 3 }.bounding_box().is_none());
        assert!(Distribution::uniform(vec![1.0], vec![1.0]).is_err());
        assert!(Distribution::gaussian(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn ball_probability_and_quantiles() {
        let g = Distribution::standard_normal(1);
        let mc = McParams::default();
        let p = g.ball_probability(1.0, mc).unwrap().value;
        assert!((p - 0.682_689_492_137_085_9).abs() < 1e-12);
        let q = g.radial_quantiles(&[0.5], mc).unwrap()[0];
        assert!((q - 0.674_489_750_196_081_7).abs() < 1e-9);
        let g2 = Distribution::standard_normal(2);
        let est = g2.ball_probability(1.0, mc).unwrap();
        let exact = 1.0 - (-0.5f64).exp();
        assert!((est.value - exact).abs() < 4.0 * est.std_err.unwrap());
    }
}
