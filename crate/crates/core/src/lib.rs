//! Planar n-body cluster dynamics: direct integration, shape and McGehee
//! blow-up coordinates, central configurations, spin diagnostics and a
//! numerical time-dependent shadowing construction.
//!
//! Numerical kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the diagnostics,
//! file formats and command line use.

pub mod blowup;
pub mod centconfig;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod integrator;
pub mod io;
pub mod report;
pub mod scalar;
pub mod shadowing;
pub mod system;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MassSystem64 = system::MassSystem<f64>;
pub type CartesianState64 = system::CartesianState<f64>;
pub type ClusterGeometry64 = system::ClusterGeometry<f64>;
pub type MassMetric64 = system::MassMetric<f64>;

pub type MassSystem32 = system::MassSystem<f32>;
pub type CartesianState32 = system::CartesianState<f32>;
pub type Scenario64 = dynamics::Scenario<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
