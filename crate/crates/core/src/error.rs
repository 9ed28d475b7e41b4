use thiserror::Error;

/// Failure modes shared by every diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    /// A point or ball left the field's domain, or hit a singular point.
    #[error("domain error: {0}")]
    Domain(String),
    /// An input violated an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Inconsistent or unsupported configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// The integrand produced a non-finite value.
    #[error("quadrature failure at {point:?}: {message}")]
    Quadrature { point: Vec<f64>, message: String },
    /// A computation would exceed the configured resource budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Process exit code for this error class: 2 for caller mistakes,
    /// 3 for numerical or I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Precondition(_) | Error::Config(_) => 2,
            Error::Quadrature { .. }
            | Error::Resource(_)
            | Error::Io(_)
            | Error::Serialization(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
