use std::path::Path;

use clap::Args;
use quantgrid::measure::{Distribution, DistributionSpec};
use quantgrid::{Backend, LloydConfig, Pullback};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Either a fixed ball radius or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusArg {
    Fixed(f64),
    Auto,
}

impl Serialize for RadiusArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RadiusArg::Fixed(r) => s.serialize_f64(*r),
            RadiusArg::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for RadiusArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n.as_f64().map(RadiusArg::Fixed).ok_or_else(|| serde::de::Error::custom("bad radius")),
            serde_json::Value::String(s) if s == "auto" => Ok(RadiusArg::Auto),
            other => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got {other}"))),
        }
    }
}

impl std::str::FromStr for RadiusArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(RadiusArg::Auto);
        }
        s.parse::<f64>().map(RadiusArg::Fixed).map_err(|_| format!("expected a number or 'auto', got '{s}'"))
    }
}

/// Fields shared by the config file and the command line. Every field is
/// optional; flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Structured JSON config; flags override its fields.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<String>,
    /// Preset distribution name (uniform01, gauss1d, gauss2d, exp:<rate>, ...).
    #[arg(long)]
    pub dist: Option<String>,
    /// Full distribution description (config file only).
    #[arg(skip)]
    pub distribution: Option<DistributionSpec>,
    /// Empirical measure from a CSV file (x1..xd[,weight]).
    #[arg(long)]
    pub data: Option<String>,
    /// Point dimension of the CSV data (otherwise inferred).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Grid size.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Largest level of a splitting ladder.
    #[arg(long = "Nmax")]
    pub n_max: Option<usize>,
    /// exact1d, mc, atoms or planar.
    #[arg(long)]
    pub backend: Option<String>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ball radius for the bounded variant, or 'auto'.
    #[arg(long)]
    pub radius: Option<RadiusArg>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long = "tol-gap")]
    pub tol_gap: Option<f64>,
    #[arg(long = "tol-move")]
    pub tol_move: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// segment or freeze.
    #[arg(long, value_parser = parse_pullback)]
    pub pullback: Option<Pullback>,
    /// Initial grid (grid JSON or CSV).
    #[arg(long)]
    pub init: Option<String>,
    /// Error level c for the radius bound.
    #[arg(long)]
    pub c: Option<f64>,
    /// Previous-level optimal error for the radius bound.
    #[arg(long = "e-prev")]
    pub e_prev: Option<f64>,
    /// Random restarts for optimal-error estimates.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Quadrature nodes per shared edge for planar Hessians.
    #[arg(long = "quad-points")]
    pub quad_points: Option<usize>,
}

fn parse_pullback(s: &str) -> Result<Pullback, String> {
    match s {
        "segment" => Ok(Pullback::Segment),
        "freeze" => Ok(Pullback::Freeze),
        _ => Err(format!("expected segment or freeze, got '{s}'")),
    }
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Options {
    /// Reads the config file named by `--config` (if any) and lays the flags over it.
    pub fn resolve(self) -> Result<Options, CliError> {
        let mut base = match &self.config {
            None => Options::default(),
            Some(path) => load(path)?,
        };
        let top = &self;
        overlay!(
            base, top, dist, distribution, data, dim, n, n_max, backend, samples, seed, radius, out, tol_gap,
            tol_move, max_iter, pullback, init, c, e_prev, restarts, quad_points
        );
        base.config = self.config;
        Ok(base)
    }
}

fn load(path: &str) -> Result<Options, CliError> {
    if !Path::new(path).exists() {
        return Err(CliError::config("config_not_found", format!("config file '{path}' does not exist")));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config("config_invalid", format!("{path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| CliError::config("config_invalid", format!("{path}: {e}")))
}

/// Everything a command needs, after defaults are applied.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: String,
    pub distribution: String,
    pub dim: usize,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub seed: u64,
    pub lloyd: LloydConfig,
    pub radius: Option<RadiusArg>,
    pub init: Option<String>,
    pub c: Option<f64>,
    pub e_prev: Option<f64>,
    pub restarts: usize,
    pub quad_points: usize,
    pub mc_samples: usize,
    pub out: String,
    pub config: Option<String>,
}

pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_SAMPLES: usize = 200_000;
pub const DEFAULT_RESTARTS: usize = 8;
pub const DEFAULT_QUAD_POINTS: usize = 512;

pub fn build(command: &str, o: &Options) -> Result<(Resolved, Distribution), CliError> {
    let sources = [o.dist.is_some(), o.distribution.is_some(), o.data.is_some()].iter().filter(|b| **b).count();
    if sources > 1 {
        return Err(CliError::config("config_invalid", "give only one of dist, distribution and data".into()));
    }
    let spec = if let Some(name) = &o.dist {
        DistributionSpec::parse_name(name)?
    } else if let Some(spec) = &o.distribution {
        spec.clone()
    } else if let Some(path) = &o.data {
        if !Path::new(path).exists() {
            return Err(CliError::config("data_not_found", format!("data file '{path}' does not exist")));
        }
        DistributionSpec::Empirical { path: path.clone(), dim: o.dim }
    } else {
        return Err(CliError::config("config_invalid", "a distribution is required (--dist or --data)".into()));
    };
    let dist = spec.build()?;
    let samples = o.samples.unwrap_or(DEFAULT_SAMPLES);
    let backend = match o.backend.as_deref() {
        None => Backend::exact_for(&dist).ok_or_else(|| {
            CliError::config("config_invalid", format!("no exact backend for {}; pass --backend mc --seed S", dist.label()))
        })?,
        Some("exact1d") => Backend::Exact1d,
        Some("atoms") => Backend::Atoms,
        Some("planar") => Backend::Planar { order: 8 },
        Some("mc") => {
            let seed = o.seed.ok_or_else(|| CliError::config("config_invalid", "the mc backend needs an explicit seed".into()))?;
            Backend::MonteCarlo { samples, seed }
        }
        Some(other) => return Err(CliError::config("config_invalid", format!("unknown backend '{other}'"))),
    };
    let defaults = LloydConfig::default();
    let lloyd = LloydConfig {
        backend,
        max_iter: o.max_iter.unwrap_or(defaults.max_iter),
        tol_gap: o.tol_gap.or(defaults.tol_gap),
        tol_move: o.tol_move.unwrap_or(defaults.tol_move),
        radius_bound: match o.radius {
            Some(RadiusArg::Fixed(r)) => Some(r),
            _ => None,
        },
        pullback: o.pullback.unwrap_or_default(),
    };
    lloyd.validate()?;
    let resolved = Resolved {
        command: command.to_string(),
        distribution: dist.label(),
        dim: dist.dim(),
        n: o.n,
        n_max: o.n_max,
        seed: o.seed.unwrap_or(0),
        lloyd,
        radius: o.radius,
        init: o.init.clone(),
        c: o.c,
        e_prev: o.e_prev,
        restarts: o.restarts.unwrap_or(DEFAULT_RESTARTS),
        quad_points: o.quad_points.unwrap_or(DEFAULT_QUAD_POINTS),
        mc_samples: samples,
        out: o.out.clone().unwrap_or_else(|| DEFAULT_OUT.to_string()),
        config: o.config.clone(),
    };
    Ok((resolved, dist))
}
