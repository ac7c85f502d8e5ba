use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate}, residual {residual})")]
    NotConverged {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("matrix is not symmetric: max |m_ij - m_ji| = {max_asymmetry}")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("{what} of size {size} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("target vector is not one-hot")]
    NotOneHot,

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic at byte offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX data at byte offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },

    #[error("IDX dimension overflow at byte offset {offset}")]
    DimensionOverflow { offset: usize },

    #[error("label {label} at byte offset {offset} is not below the class count {classes}")]
    LabelOutOfRange {
        offset: usize,
        label: usize,
        classes: usize,
    },

    #[error("IDX record count mismatch: {images} images vs {labels} labels")]
    RecordCountMismatch { images: usize, labels: usize },

    #[error("feature table line {line}: {message}")]
    Table { line: usize, message: String },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("slope fit needs at least {required} points, found {found}")]
    TooFewPoints { found: usize, required: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
