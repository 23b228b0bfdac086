use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A thinning bound was exceeded by the rate it must dominate. The
    /// offending proposal time and both values are carried so the caller can
    /// see how badly the envelope failed; the event is never silently
    /// clipped.
    #[error("invalid rate bound at u = {at}: rate {rate} exceeds bound {bound}")]
    InvalidBound { at: f64, rate: f64, bound: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite state at t = {t}: {detail}")]
    NonFiniteState { t: f64, detail: String },

    #[error("non-finite output from factor {factor} at x = {at:?}")]
    NonFiniteFactor { factor: usize, at: Vec<f64> },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("position {x} left the bound search interval [{lo}, {hi}]")]
    OutsideBoundInterval { x: f64, lo: f64, hi: f64 },

    #[error("velocity flip undefined: gradient is zero")]
    UndefinedFlip,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate particle system: {0}")]
    DegenerateSystem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
