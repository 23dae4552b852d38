use std::path::PathBuf;

use crate::ead::FitTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("scale error: {0}")]
    Scale(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate disc: A*B = {0:e}")]
    DegenerateDisc(f64),

    #[error("non-finite energy at iteration {iteration}")]
    Numeric {
        iteration: usize,
        trace: Box<FitTrace>,
    },

    #[error("ejection fraction undefined: end-diastolic volume is {0}")]
    UndefinedEf(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
