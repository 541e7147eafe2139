use thiserror::Error;

/// Errors raised by configuration, simulation and I/O.
///
/// Estimation outcomes that depend on the sampled data (for instance a
/// non-positive plug-in base) are not errors; they are reported as
/// [`crate::plugin::PluginFailure`] tags inside the estimate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no coarse grid point lies in [{delta}, {upper}]")]
    EmptyThinning { delta: f64, upper: f64 },

    #[error("coordinate paths need {requested} values, budget is {budget}")]
    MemoryBudget { requested: usize, budget: usize },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
