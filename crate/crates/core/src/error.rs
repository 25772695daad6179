use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("grid inadequate: {0}")]
    GridInadequate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("caustic reached at t = {time}; field reconstruction refused beyond it")]
    CausticReached { time: f64 },

    #[error("time {time} outside computed range [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("too few usable samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },

    #[error("non-positive value in convergence fit at index {index}")]
    NonPositive { index: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
