use thiserror::Error;

/// Errors raised by model construction, simulation and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature for {integral} did not converge (estimate {estimate:e}, error {error:e})")]
    Quadrature { integral: String, estimate: f64, error: f64 },

    #[error("condition {condition} violated: {detail}")]
    ConditionViolated { condition: String, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("exp(theta'z) overflows for record {record}")]
    Overflow { record: usize },

    #[error("no solution: {0}")]
    NoSolution(String),

    /// Some coordinate of the covariates never changes sign, so the empirical
    /// estimating equation has no root.
    #[error("no root: component {component} of the estimating equation does not pass through zero")]
    NoRoot { component: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    Divergence { iterations: usize, residual: f64, trace: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{}", match row { Some(r) => format!("row {r}: {message}"), None => message.clone() })]
    Parse { row: Option<usize>, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Short stable name of the variant, used to tally failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid-model",
            Error::InvalidInput(_) => "invalid-input",
            Error::Quadrature { .. } => "quadrature",
            Error::ConditionViolated { .. } => "condition-violated",
            Error::Domain(_) => "domain",
            Error::Overflow { .. } => "overflow",
            Error::NoSolution(_) => "no-solution",
            Error::NoRoot { .. } => "no-root",
            Error::Singular(_) => "singular",
            Error::Divergence { .. } => "divergence",
            Error::Unsupported(_) => "unsupported",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse { row: None, message: e.to_string() }
    }
}
