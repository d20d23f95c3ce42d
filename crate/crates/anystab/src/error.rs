use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("disturbance {w} exceeds the bound Ω/2 = {half_omega}")]
    DisturbanceBound { w: f64, half_omega: f64 },

    #[error("input symbol {0} is outside the channel input alphabet")]
    SymbolOutOfAlphabet(String),

    #[error("feedback is disabled for this channel session")]
    FeedbackDisabled,

    #[error("feedback history before use {0} has been truncated")]
    HistoryTruncated(u64),

    #[error("transition matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("rate {rate} is not below log2(λ) = {log2_lambda}")]
    RateTooHigh { rate: f64, log2_lambda: f64 },

    #[error("rate {rate} does not exceed log2(λ) = {log2_lambda}; stabilization needs R > log2 λ")]
    RateTooLow { rate: f64, log2_lambda: f64 },

    #[error("window width {delta} is below the minimum {min}")]
    DeltaTooSmall { delta: f64, min: f64 },

    #[error("window {delta} must exceed twice the observation noise bound {gamma}")]
    NoiseTooLarge { delta: f64, gamma: f64 },

    #[error("randomized controller has no shared seed configured")]
    MissingSharedSeed,

    #[error("controller copies disagree at t={t}: encoder {enc}, decoder {dec}")]
    ControllerDesync { t: u64, enc: f64, dec: f64 },

    #[error("label precondition violated: 2^(nR) = {branching} is not above Kλ^n = {needed}")]
    LabelPrecondition { branching: f64, needed: f64 },

    #[error("dance decode failed at t={t}: residual {residual}")]
    DanceDecode { t: u64, residual: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("incompatible configuration: {0}")]
    Incompatible(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
