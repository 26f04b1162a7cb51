use std::path::PathBuf;

use crate::fit::LorentzianFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the formula (log of a
    /// non-positive number, a fraction outside [0,1], ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The least-squares problem has no unique solution (flat curve,
    /// constant regressor).
    #[error("rank-deficient problem: {0}")]
    Rank(String),

    /// The optimizer ran out of iterations. Carries the best parameters seen.
    #[error("fit did not converge after {iterations} iterations (rms residual {:.3e})", best.rms_residual)]
    NotConverged {
        iterations: usize,
        best: Box<LorentzianFit>,
    },

    /// The curve does not cover enough of the sigmoid for a meaningful fit.
    #[error("curve covers only {:.1}% of the fitted span (need at least 60%)", covered * 100.0)]
    Coverage { covered: f64 },

    #[error("marker absent: {0}")]
    MarkerAbsent(String),

    #[error("ambiguous marker: {0}")]
    Ambiguous(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line front end.
    ///
    /// | code | meaning                          |
    /// |------|----------------------------------|
    /// | 2    | usage or configuration error     |
    /// | 3    | input file could not be parsed   |
    /// | 4    | numerical failure (fit, domain)  |
    /// | 5    | I/O failure                      |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } => 3,
            Error::Io { .. } => 5,
            _ => 4,
        }
    }
}
