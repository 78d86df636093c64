//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Contract and configuration failures surfaced by core operations.
///
/// Programming-error preconditions that cannot be reached through any
/// public configuration surface are asserted instead.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A name did not parse to a known category / strategy / relation.
    UnknownName { what: &'static str, name: String },
    /// Invalid configuration value (zero vocabulary, bad schedule, ...).
    InvalidConfig(String),
    /// A token sequence had the wrong length for its contract.
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A token fell outside the range its phase allows.
    TokenOutOfRange { what: &'static str, token: u32 },
    /// Advantage normalization needs at least two rollouts.
    GroupTooSmall { got: usize },
    /// A value that must be finite was not.
    NonFinite { what: &'static str },
    /// Checkpoint/vocabulary dimensions disagree.
    DimensionMismatch { what: &'static str },
    /// Pearson statistics need at least three prompts.
    TooFewPrompts { got: usize },
    /// Two reports do not cover the same suite and seeds.
    SuiteMismatch,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::UnknownName { what, name } => {
                write!(f, "unknown {what}: {name:?}")
            }
            CoreError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::LengthMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected length {expected}, got {got}"),
            CoreError::TokenOutOfRange { what, token } => {
                write!(f, "token {token} out of range for {what}")
            }
            CoreError::GroupTooSmall { got } => {
                write!(f, "advantage group needs >= 2 rollouts, got {got}")
            }
            CoreError::NonFinite { what } => write!(f, "non-finite value in {what}"),
            CoreError::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
            CoreError::TooFewPrompts { got } => {
                write!(f, "correlation needs >= 3 prompts, got {got}")
            }
            CoreError::SuiteMismatch => {
                write!(f, "reports cover different suites or seed sets")
            }
        }
    }
}
