use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The jump law has no closed-form characteristic function.
    #[error("no analytic characteristic function for jump law `{0}`; use the empirical estimator")]
    UnsupportedAnalytic(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("operator group is not stable (spectral abscissa {abscissa} >= 0)")]
    Unstable { abscissa: f64 },

    #[error(
        "jump law `{0}` has an infinite log-moment, so the stationary law does not exist; \
         run `mehler experiment logmoment` to study it"
    )]
    LogMomentInfinite(String),

    #[error("random integral forms disagree by {diff:e} (allowed {allowed:e})")]
    IntegralInconsistent { diff: f64, allowed: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
