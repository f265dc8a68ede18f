use thiserror::Error;

/// Errors produced anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {t} us: {reason}")]
    Integration { t: f64, reason: String },

    #[error("accuracy not reached: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    Accuracy { estimate: f64, tolerance: f64 },

    #[error("trajectory {pulse_id} failed at t = {t} us: {detail}")]
    Trajectory { pulse_id: u32, t: f64, detail: String },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unsupported correlation order {0}")]
    UnsupportedOrder(usize),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("unknown command `{0}`")]
    UnknownCommand(String),

    #[error("{context}: {source}")]
    Stage {
        context: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, context: &'static str) -> Self {
        Error::Stage {
            context,
            source: Box::new(self),
        }
    }
}
