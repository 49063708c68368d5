use thiserror::Error;

/// Errors raised by mesh construction, assembly, solves and sweeps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh invariant violated: {0}")]
    Invariant(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("size mismatch: expected {expected}, got {actual} ({context})")]
    SizeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical error: {message} (relative residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error("sweep point {param:e} failed: {source}")]
    SweepPoint {
        param: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: message.into(),
            residual,
        }
    }

    /// True for failures of the linear algebra rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical { .. } => true,
            Error::SweepPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
