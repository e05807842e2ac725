use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown erosion model builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("polynomial erosion model needs at least 2 coefficients, got {0}")]
    ShortPolynomial(usize),
    #[error("argument {name} = {value} outside [{lo}, {hi}]")]
    OutOfDomain { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("root not bracketed on [{lo}, {hi}] (f = {flo}, {fhi})")]
    NoBracket { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("time step underflow at t = {t}: {detail}")]
    StepUnderflow { t: f64, detail: String },
    #[error("initial data rejected: {0}")]
    InitialData(String),
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("total drop mismatch: {0} vs {1}")]
    DropMismatch(f64, f64),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoBracket { .. } | Error::StepUnderflow { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
