use thiserror::Error;

/// Errors raised by the quantization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("duplicate grid points at indices {0} and {1}")]
    DuplicatePoint(usize, usize),
    #[error("grid points {0} and {1} merged during the centroid update")]
    Merge(usize, usize),
    #[error("could not seed a new grid point after {attempts} draws: {detail}")]
    Seeding { attempts: usize, detail: String },
    #[error("no feasible radius: {binding} fails up to R = {ceiling}")]
    Infeasible { binding: String, ceiling: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("level {level}: {source}")]
    AtLevel { level: usize, source: Box<Error> },
}

impl Error {
    /// Stable machine-readable code, used by the CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config_invalid",
            Error::UnsupportedBackend(_) => "unsupported_backend",
            Error::Invariant(_) => "invariant_violation",
            Error::DuplicatePoint(..) => "duplicate_point",
            Error::Merge(..) => "merge",
            Error::Seeding { .. } => "seeding",
            Error::Infeasible { .. } => "infeasible",
            Error::Domain(_) => "domain",
            Error::Quadrature(_) => "quadrature_divergence",
            Error::AtLevel { source, .. } => source.code(),
        }
    }

    /// Whether the error is a configuration problem (as opposed to a numerical failure).
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::UnsupportedBackend(_) => true,
            Error::AtLevel { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
