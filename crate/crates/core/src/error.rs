use thiserror::Error;

/// Errors raised by the toolkit. Each variant belongs to one [`ErrorClass`],
/// which the CLI maps onto its exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {source_name}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        source_name: String,
        line: Option<u64>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix {label} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { label: String, asymmetry: f64 },

    #[error("matrix {label} is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { label: String, min_eigenvalue: f64 },

    #[error("eigensolver did not converge on matrix {0}")]
    NoConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fiber {fiber} has repeated eigenvalues (gap {gap:e})")]
    RepeatedEigenvalues { fiber: usize, gap: f64 },

    #[error("ill-conditioned system (condition estimate {condition:e}): {context}")]
    IllConditioned { condition: f64, context: String },

    #[error("band-pass spectrum escapes [0, 1]: eigenvalue {0:e}")]
    SpectrumEscape(f64),

    #[error("cannot certify reconstruction: lambda_j = {0} (must be < 1)")]
    Certificate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Dimension,
    Numerical,
    Certificate,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. } | Error::Io { .. } | Error::Invalid(_) => ErrorClass::Parse,
            Error::Dimension(_) => ErrorClass::Dimension,
            Error::Certificate(_) => ErrorClass::Certificate,
            Error::NotSymmetric { .. }
            | Error::NotPsd { .. }
            | Error::NoConvergence(_)
            | Error::Numerical(_)
            | Error::RepeatedEigenvalues { .. }
            | Error::IllConditioned { .. }
            | Error::SpectrumEscape(_) => ErrorClass::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Parse => 2,
            ErrorClass::Dimension => 3,
            ErrorClass::Numerical => 4,
            ErrorClass::Certificate => 5,
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
