//! Error taxonomy shared by every operator in the crate.
//!
//! Operators return structured errors instead of panicking: numerical
//! preconditions (positivity, finiteness, shape agreement) are checked at the
//! public boundaries, and iterative routines report failure to converge with
//! enough context to reproduce the call.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong when building backgrounds, applying
/// operators, stepping the flow, or solving eigenproblems.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter fails validation (ranges, admissible combinations).
    InvalidParameter {
        /// Which parameter or parameter group.
        what: &'static str,
        /// Human-readable detail, including the offending value.
        details: String,
    },
    /// A field's length does not match the grid's node count (or another
    /// required length).
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    /// A field that must be strictly positive is not.
    NonPositive { what: &'static str, index: usize, value: f64 },
    /// A NaN or infinity appeared where finite data is required.
    NonFinite { what: &'static str, index: usize },
    /// The conformal factor lost positivity (or collapsed below the
    /// representable floor) while the flow was running.
    BlowDown { step: u64, min_w: f64 },
    /// A linear or eigenvalue solve failed (non-convergence, singular pivot).
    SolveFailure { what: &'static str, details: String },
    /// The requested family/operation combination is not implemented.
    Unsupported { what: &'static str },
    /// A background failed its boundary-compatibility check
    /// (weighted mean curvature not zero to tolerance).
    IncompatibleBoundary { value: f64, tol: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { what, details } => {
                write!(f, "invalid parameter `{what}`: {details}")
            }
            Error::ShapeMismatch { what, expected, got } => {
                write!(f, "shape mismatch for `{what}`: expected {expected} entries, got {got}")
            }
            Error::NonPositive { what, index, value } => {
                write!(f, "`{what}` must be strictly positive; entry {index} is {value}")
            }
            Error::NonFinite { what, index } => {
                write!(f, "`{what}` contains a non-finite value at entry {index}")
            }
            Error::BlowDown { step, min_w } => {
                write!(f, "conformal factor blew down at step {step} (min w = {min_w:.3e})")
            }
            Error::SolveFailure { what, details } => {
                write!(f, "solver `{what}` failed: {details}")
            }
            Error::Unsupported { what } => write!(f, "unsupported: {what}"),
            Error::IncompatibleBoundary { value, tol } => write!(
                f,
                "background is not boundary-compatible: |H^m_phi0| = {value:.3e} exceeds {tol:.1e}"
            ),
        }
    }
}

impl core::error::Error for Error {}

/// Checks that `field` has exactly `expected` entries.
pub(crate) fn check_len(what: &'static str, field: &[f64], expected: usize) -> Result<()> {
    if field.len() != expected {
        return Err(Error::ShapeMismatch { what, expected, got: field.len() });
    }
    Ok(())
}

/// Checks that every entry of `field` is finite.
pub(crate) fn check_finite(what: &'static str, field: &[f64]) -> Result<()> {
    for (i, &v) in field.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what, index: i });
        }
    }
    Ok(())
}

/// Checks that every entry of `field` is finite and strictly positive.
pub(crate) fn check_positive(what: &'static str, field: &[f64]) -> Result<()> {
    for (i, &v) in field.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what, index: i });
        }
        if v <= 0.0 {
            return Err(Error::NonPositive { what, index: i, value: v });
        }
    }
    Ok(())
}
