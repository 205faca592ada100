use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid manifold or model parameters at construction time.
    #[error("invalid parameter `{param}`: {reason}")]
    Construction { param: &'static str, reason: String },

    /// Argument outside the domain of an operation (negative time, t > T, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A field that must be strictly positive has a nonpositive entry.
    #[error("{what} is not strictly positive at point {index} (value {value:e})")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("field length {got} does not match manifold point count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {what} at point {index}")]
    NonFinite { what: &'static str, index: usize },

    /// Iterative solver failed to reach its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Numerical breakdown (zero denominator, clamp overflow, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A check was refused because its hypotheses do not hold (curvature class,
    /// convexity certificate, resolution).
    #[error("refused: {0}")]
    Refused(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error{}: {msg}", fmt_ctx(.line, .key))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        msg: String,
    },

    #[error("missing series `{0}`")]
    MissingSeries(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_ctx(line: &Option<usize>, key: &Option<String>) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!(" (line {l}, key `{k}`)"),
        (Some(l), None) => format!(" (line {l})"),
        (None, Some(k)) => format!(" (key `{k}`)"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn config(line: Option<usize>, key: Option<&str>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            key: key.map(str::to_owned),
            msg: msg.into(),
        }
    }

    /// Process exit code for this error class: 2 for configuration or
    /// curvature refusals, 3 for I/O, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Refused(_) | Error::Construction { .. } => 2,
            Error::Io(_) | Error::Json(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
