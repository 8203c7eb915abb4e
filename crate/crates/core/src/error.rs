use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{what} did not converge within {iterations} iterations (last update norm {last_norm:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        last_norm: f64,
    },

    #[error("controllability error: {0}")]
    Controllability(String),

    #[error("null target missed: final state norm {final_norm:.3e} exceeds tolerance {tol:.3e}")]
    Unreached { final_norm: f64, tol: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI on its single error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Convergence { .. } => "E_CONVERGENCE",
            Error::Controllability(_) => "E_CONTROLLABILITY",
            Error::Unreached { .. } => "E_NULL_TARGET",
            Error::Verification(_) => "E_VERIFY",
            Error::Index(_) => "E_INDEX",
            Error::Dimension(_) => "E_DIMENSION",
            Error::Config(_) => "E_CONFIG",
            Error::Io(_) => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numeric(format!("{what} evaluated to {value}")))
    }
}
