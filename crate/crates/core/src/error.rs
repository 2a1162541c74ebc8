use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error at row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    #[error("confidence {value} out of [0, 1] at row {row}, column `{column}`")]
    Range {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("value {0} is not a confidence in [0, 1]")]
    NotAConfidence(f64),

    #[error("split error: {0}")]
    Split(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("formula references {found} variables, limit is {limit}")]
    VariableLimit { found: usize, limit: usize },

    #[error("no value for monitor {0}")]
    MissingMonitor(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("AuC undefined: labels contain a single class")]
    UndefinedAuc,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::Syntax { .. }
            | Error::UnknownVariable(_)
            | Error::VariableLimit { .. }
            | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::Io(_) => ErrorClass::Other,
            _ => ErrorClass::Data,
        }
    }
}
