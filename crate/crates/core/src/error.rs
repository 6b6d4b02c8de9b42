use thiserror::Error;

/// Errors raised by the model, estimators, planners and experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("traffic must be nonnegative, got {0}")]
    NegativeRate(f64),

    #[error("rate {0} outside [0, 1]")]
    RateOutOfRange(f64),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("ACK/NACK feedback on band {band} contradicts an idle state")]
    InconsistentFeedback { band: usize },

    #[error("feedback on band {band} has zero probability under the posterior")]
    ImpossibleFeedback { band: usize },

    #[error("prior has zero total mass")]
    ZeroPrior,

    #[error("{bands} bands exceed the enumeration limit of {max}")]
    TooManyBands { bands: usize, max: usize },

    #[error("at least {min} bands required, got {bands}")]
    TooFewBands { bands: usize, min: usize },

    #[error("budget {budget} exceeds the feasible maximum {max}")]
    BudgetInfeasible { budget: f64, max: f64 },

    #[error("level map has {found} LOW entries, compressed state expects {expected}")]
    InconsistentLevelMap { expected: usize, found: usize },

    #[error("cost budget must be positive, got {0}")]
    NonPositiveBudget(f64),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
