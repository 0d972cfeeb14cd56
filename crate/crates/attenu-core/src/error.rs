use crate::estimands::Scale;
use crate::model::ValidationReport;

/// Crate-wide error type.
///
/// Malformed models are reported through [`ValidationReport`] rather than
/// constructed piecemeal, so operations that require a valid spec wrap the
/// whole report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),

    #[error("{context}: got length {got}, expected {expected}")]
    DimensionMismatch {
        context: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("matrix rows must have equal length: row {row} has {got} entries, expected {expected}")]
    RaggedMatrix {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("taper checks require a square kernel, got {rows}x{cols}")]
    NonSquareKernel { rows: usize, cols: usize },

    #[error("{scale} scale is undefined for {quantity} = {value}")]
    ScaleDomain {
        scale: Scale,
        quantity: String,
        value: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rejection sampler exhausted its budget after {attempts} attempts")]
    RejectionBudget { attempts: u64 },

    #[error("malformed matrix CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
}
