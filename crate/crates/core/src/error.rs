use std::path::PathBuf;

use thiserror::Error;

use crate::sparse::CgReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("conjugate gradient did not converge after {} iterations (relative residual {:.3e})", .0.iterations, .0.relative_residual)]
    CgNotConverged(CgReport),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dimension(expected: usize, actual: usize) -> Self {
        Error::Dimension { expected, actual }
    }

    pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::dimension(expected, actual))
        }
    }
}
