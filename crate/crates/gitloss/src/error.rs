//! The crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands have incompatible shapes. Both shapes are named so the
    /// message is actionable without a debugger.
    #[error("{op}: dimension mismatch between {lhs_rows}x{lhs_cols} and {rhs_rows}x{rhs_cols}")]
    Dimension {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// A scalar argument is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A class label does not fit the class count it is used against.
    #[error("label {label} at row {row} is out of range for {n_classes} classes")]
    Label {
        row: usize,
        label: usize,
        n_classes: usize,
    },

    /// A NaN or infinity showed up where only finite values are allowed.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A file does not match the expected binary layout.
    #[error("{}: invalid format: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    /// Paired files disagree on how many samples they hold.
    #[error("sample count mismatch: {images} images vs {labels} labels")]
    Consistency { images: usize, labels: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dimension(
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    ) -> Self {
        Error::Dimension {
            op,
            lhs_rows: lhs.0,
            lhs_cols: lhs.1,
            rhs_rows: rhs.0,
            rhs_cols: rhs.1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
