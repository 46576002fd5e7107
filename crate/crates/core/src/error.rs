use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {what} at flat offset {offset}")]
    NonFiniteValue { what: &'static str, offset: usize },

    #[error("index ({row}, {col}, {band}) out of range")]
    IndexOutOfRange { row: usize, col: usize, band: usize },

    /// A detector pixel receives no mask energy in any band, so the
    /// sensing matrix does not have full row rank.
    #[error("coded aperture is degenerate: detector pixel ({row}, {col}) sees no mask energy")]
    MaskDegenerate { row: usize, col: usize },

    #[error("dense instance too large: {entries} entries exceeds cap of {cap}")]
    InstanceTooLarge { entries: usize, cap: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("crop size {size} exceeds mask dimensions {height}x{width}")]
    CropTooLarge {
        size: usize,
        height: usize,
        width: usize,
    },

    #[error("negative measurement value {value} at pixel {offset}")]
    NegativeMeasurement { offset: usize, value: f64 },

    /// Solver iterate became non-finite.
    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(
    what: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        what,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
