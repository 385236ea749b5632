//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation received an empty input it cannot define a value for.
    EmptyInput { op: &'static str },
    /// A value that must be finite was NaN or infinite.
    NonFinite { op: &'static str, what: String },
    /// Every mixture term vanished; no density can be evaluated.
    DegenerateMixture,
    /// Two operands with incompatible dimensions, reported as (rows, cols).
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A precondition on an argument failed.
    InvalidArgument { op: &'static str, reason: String },
    /// A backward pass was handed a cache that does not belong to its inputs.
    MismatchedCache { reason: String },
    /// Training produced a non-finite loss. `batch` is `None` when the
    /// divergence was detected during the end-of-epoch full evaluation.
    Diverged { epoch: usize, batch: Option<usize> },
    /// ROC-AUC needs at least one positive and one negative label.
    AucUndefined,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput { op } => write!(f, "{op}: empty input"),
            Error::NonFinite { op, what } => write!(f, "{op}: non-finite {what}"),
            Error::DegenerateMixture => write!(f, "degenerate mixture: all terms are -inf"),
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::InvalidArgument { op, reason } => write!(f, "{op}: {reason}"),
            Error::MismatchedCache { reason } => write!(f, "mismatched forward cache: {reason}"),
            Error::Diverged { epoch, batch } => match batch {
                Some(b) => write!(f, "non-finite loss at epoch {epoch}, batch {b}"),
                None => write!(f, "non-finite loss at epoch {epoch} (full evaluation)"),
            },
            Error::AucUndefined => write!(f, "AUC undefined: labels contain a single class"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
