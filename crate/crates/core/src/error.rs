use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bodies {0} and {1} coincide")]
    Collision(usize, usize),

    #[error("invalid mass system: {0}")]
    InvalidMasses(String),

    #[error("invalid cluster: {0}")]
    InvalidCluster(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("center of mass drift {drift:.3e} exceeds {limit:.1e}")]
    CenterOfMassDrift { drift: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("chart {chart} is singular here (|z_fixed|/r = {ratio:.3e}); switch to chart {suggested}")]
    ChartSingular {
        chart: usize,
        ratio: f64,
        suggested: usize,
    },

    #[error("variant mismatch: state is {state}, forcing is {forcing}")]
    VariantMismatch {
        state: &'static str,
        forcing: &'static str,
    },

    #[error("solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spectral gap is zero; cannot build {0} projection bounds")]
    NoSpectralGap(&'static str),

    #[error("weight eta = {eta} incompatible with decay rate beta - eps = {limit}")]
    IncompatibleWeight { eta: f64, limit: f64 },

    #[error("picard iteration diverged: {0}")]
    Divergence(String),

    #[error("trajectory left the chart neighbourhood at t = {0}")]
    EscapedNeighbourhood(f64),

    #[error("constant function near the critical point")]
    ConstantFunction,

    #[error("theta jump {jump:.3} rad between samples {index} and {next} exceeds pi", next = index + 1)]
    ThetaSplice { index: usize, jump: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl Error {
    /// Malformed or inconsistent input, as opposed to a numerical failure.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidMasses(_)
                | Error::InvalidCluster(_)
                | Error::InvalidState(_)
                | Error::Dimension { .. }
                | Error::VariantMismatch { .. }
                | Error::UnknownScenario(_)
                | Error::InvalidParameter(_)
                | Error::IncompatibleWeight { .. }
                | Error::Io(_)
                | Error::Format(_)
        )
    }
}
