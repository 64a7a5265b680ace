//! Workbench error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QmwbError {
    /// A label lookup failed (unknown command component or outcome).
    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    /// A command-set or map domain violation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Vector / matrix dimensions do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// A model failed validation where a valid model is required.
    #[error("validation error: {0}")]
    Validation(String),

    /// A Born-rule expectation value had an imaginary residue above tolerance.
    #[error("imaginary residue {residue:e} above tolerance for command {command}, outcome `{outcome}`")]
    ImaginaryResidue {
        command: String,
        outcome: String,
        residue: f64,
    },

    /// Conditioning on a zero-likelihood event.
    #[error("conditioning error: outcome `{0}` has zero likelihood under the prior")]
    ZeroLikelihood(String),

    /// Envelopment-map composition mismatch.
    #[error("composition error: {0}")]
    Composition(String),

    /// A precondition of an operation failed (e.g. envelopment check before
    /// computing an advantage).
    #[error("precondition error: {0}")]
    Precondition(String),

    /// A feedback policy produced an invalid command.
    #[error("policy error at trial {trial}: command {command} not in the command set")]
    Policy { trial: u64, command: String },

    /// Not enough data to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A model was handed to a protocol routine that did not build it.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// Text-format parse failure.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QmwbError>;
