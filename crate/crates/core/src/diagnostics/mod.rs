//! Rate-law fits, spin and arclength diagnostics, and convergence to a
//! blow-up equilibrium.

pub mod equilibrium;
pub mod rates;
pub mod spin;

pub use equilibrium::{equilibrium_convergence, EquilibriumConvergence};
pub use rates::{fit_series, fit_series_scaled, rate_suite, Criterion, FitStatus, RateFit, MAX_RMS, MIN_DECADES};
pub use spin::{spin_report, spin_report_with, SpinReport, SPIN_TAIL_TOL};
