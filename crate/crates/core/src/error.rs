//! Error type shared across the core crate.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by core computations.
///
/// Shape mismatches and misuse of operation contracts are programmer
/// errors and panic instead; this enum covers conditions a caller is
/// expected to handle at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A computation produced NaN or Inf. Carries the name of the
    /// operation that first observed the non-finite value.
    NumericFault { op: &'static str },
    /// An input violated a documented precondition.
    Contract(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NumericFault { op } => write!(f, "non-finite value in `{op}`"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
