//! Numerical core for the weighted Yamabe flow with boundary on smooth
//! metric measure spaces.
//!
//! A smooth metric measure space (SMMS) is a compact manifold-with-boundary
//! `(M^n, g)` together with a weight `φ` and a real parameter `m ≥ 0`,
//! carrying the measures `e^{-φ} dV` in the interior and `e^{-φ} dA` on the
//! boundary. The objects of interest are the weighted scalar curvature
//!
//! ```text
//! R^m_φ = R_g + 2 Δ_g φ - (m+1)/m |∇φ|²        (φ ≡ 0 when m = 0)
//! ```
//!
//! and the weighted mean curvature `H^m_φ = H_g + ∂φ/∂ν`. Within a conformal
//! class (parameterized by `w > 0` with `g = w^{4/(m+n-2)} g₀` and
//! `e^{-φ} dV = w^{2(m+n)/(m+n-2)} dμ₀`) the normalized flow
//!
//! ```text
//! ∂w/∂t = -((m+n-2)/4) (R^m_φ - r^m_φ) w      in M,
//! ∂w/∂ν = 0                                    on ∂M,
//! ```
//!
//! with `r^m_φ` the measure-weighted average of `R^m_φ`, decreases the total
//! weighted volume functional's constrained energy and (in the discretization
//! used here) dissipates `r^m_φ` monotonically.
//!
//! The crate is `no_std` (with `alloc`): it holds the background catalog and
//! discrete operators ([`background`]), the conformal algebra ([`conformal`]),
//! the flow steppers and monitors ([`flow`]), the linearized spectral theory
//! ([`spectral`]), and independent cross-check routes ([`oracle`]). File
//! formats, configuration and the command line live in the companion `wyflow`
//! crate.

#![no_std]
#![deny(unsafe_code)]
// Negated float comparisons like `!(v > floor)` are deliberate: they treat
// NaN as a failure of the guarded condition.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

pub mod background;
pub mod conformal;
pub mod error;
pub mod flow;
pub mod grid;
pub mod linalg;
pub mod numeric;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};

/// Nodal scalar field over a background grid, stored in node order.
///
/// Operators expect fields to be finite everywhere and (where stated) strictly
/// positive; shape must match the grid's node count. Violations surface as
/// [`Error`] values from the operators rather than panics.
pub type Field = alloc::vec::Vec<f64>;
