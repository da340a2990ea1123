use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("numerical failure in {context} (condition estimate {condition:.3e})")]
    NumericalFailure { context: String, condition: f64 },

    /// The snapshot is numerically contained in the current reduced space.
    #[error("snapshot rejected: orthogonalized norm {remaining:.3e} below {threshold:.3e}")]
    DependentSnapshot { remaining: f64, threshold: f64 },

    #[error("coercivity strategy invalid: {0}")]
    StrategyInvalid(String),
}

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, condition: f64) -> Self {
        Error::NumericalFailure {
            context: context.into(),
            condition,
        }
    }
}
