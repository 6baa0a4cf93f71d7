//! Optimal quantization grids: Voronoi cell statistics, Lloyd iteration with
//! splitting initialization, a radius-bounded variant, and Hessian tests for
//! stationary grids.

pub mod distortion;
pub mod error;
pub mod hessian;
pub mod io;
pub mod lloyd;
pub mod measure;
pub mod quadrature;
pub mod radius;
pub mod rng;
pub mod voronoi;

pub use distortion::{distortion, energy_gap, gradient, EnergyReport};
pub use error::{Error, Result};
pub use hessian::{hessian_1d, hessian_2d, HessianReport, Label};
pub use lloyd::{ladder, run, LloydConfig, LloydRun, LloydTrace, Pullback};
pub use measure::Distribution;
pub use radius::{solve_radius, RadiusBound};
pub use voronoi::{cell_stats, Backend, CellStats, Grid};
