use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the admissible region of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data or configuration failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A linear-algebra or floating point failure during sampling.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A diagnostic could not be computed for the given draws.
    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Adds context in front of the message, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Diagnostic(m) => Error::Diagnostic(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
