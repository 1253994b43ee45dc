use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or model parameter violates its invariant.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A function argument lies outside the model's domain (negative height, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed runtime input, e.g. a non-orthonormal rotation.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error at line {line}, key `{key}`: {msg}")]
    Config { line: usize, key: String, msg: String },

    #[error("reference generation failed: {0}")]
    Reference(String),

    /// The vehicle touched the ground. A scenario outcome, not a program fault.
    #[error("crashed at t = {time:.4} s (rotor plane height {height:.4} m)")]
    Crashed { time: f64, height: f64 },

    #[error("integration fault: {0}")]
    Integration(String),

    #[error("controller fault: {0}")]
    Controller(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: usize, key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}
