//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]. Variants map one-to-one onto
//! the failure categories of the public contracts: shape and dimension
//! violations, invalid parameters, serialization format problems, and the
//! domain-specific failures of the benchmark and metric paths.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A tensor dimension was zero or otherwise unusable.
    Dimension { message: String },
    /// Two operands disagree on shape.
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    /// A parameter violates its documented constraint.
    Parameter { name: &'static str, message: String },
    /// A binary or text artifact does not match its declared format.
    Format { message: String },
    /// An operation received an empty list where at least one item is required.
    EmptyInput { what: &'static str },
    /// The call sequence is invalid (e.g. a stage reference that was never built).
    State { message: String },
    /// The input is degenerate for the requested statistic.
    DegenerateInput { message: String },
    /// A class label lies outside the declared range.
    LabelOutOfRange { label: usize, num_classes: usize },
    /// A value-level input constraint was violated (probability range, zero normal, ...).
    InvalidInput { message: String },
    /// Division by zero in a ratio-style metric.
    DivisionByZero { what: String },
    /// A structured-text or CSV document failed to parse.
    Parse { line: usize, message: String },
    /// An iterative fit diverged.
    Training { step: usize, message: String },
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dimension { message } => write!(f, "dimension error: {message}"),
            Self::ShapeMismatch {
                context,
                expected,
                actual,
            } => write!(f, "shape mismatch in {context}: expected {expected}, got {actual}"),
            Self::Parameter { name, message } => write!(f, "invalid parameter `{name}`: {message}"),
            Self::Format { message } => write!(f, "format error: {message}"),
            Self::EmptyInput { what } => write!(f, "empty input: {what}"),
            Self::State { message } => write!(f, "state error: {message}"),
            Self::DegenerateInput { message } => write!(f, "degenerate input: {message}"),
            Self::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Self::InvalidInput { message } => write!(f, "invalid input: {message}"),
            Self::DivisionByZero { what } => write!(f, "division by zero: {what}"),
            Self::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Self::Training { step, message } => write!(f, "training error at step {step}: {message}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl Error {
    pub(crate) fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Self::Parameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn format(message: impl Into<String>) -> Self {
        Self::Format {
            message: message.into(),
        }
    }

    pub(crate) fn state(message: impl Into<String>) -> Self {
        Self::State {
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Self::InvalidInput {
            message: message.into(),
        }
    }
}
