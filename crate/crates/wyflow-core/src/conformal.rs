//! Conformal calculus on a fixed background.
//!
//! A positive conformal factor `w` deforms the background structure by
//!
//! ```text
//! g = w^{p_metric} g₀,      e^{-φ} dV_g = w^{p_vol} e^{-φ₀} dV_{g₀},
//! ```
//!
//! and the weighted scalar/mean curvatures of the deformed structure come
//! from the transformation law through the weighted conformal Laplacian
//!
//! ```text
//! L u = -Δ_{φ₀} u + c_R R^m_{φ₀} u,       B u = ∂u/∂ν + c_H H^m_{φ₀} u,
//! R^m_φ = alpha · w^{-p_crit} · L w,      H^m_φ = (alpha/2) · w^{-p_vol/2} · B w,
//! ```
//!
//! with the exponent pack in [`Exponents`] (all rational functions of the
//! effective dimension `d = n + m`). `alpha·c_R = 1`, so the curvature is
//! computed as `w^{-p_crit}(-alpha·Δ_{φ₀}w + R^m_{φ₀}w)`, which keeps
//! `curvature_from_w(bg, 1) = R_bg` exact to the bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::background::Background;
use crate::error::{check_len, Error, Result};
use crate::numeric::{pairwise_map_sum, powx};
#[cfg_attr(test, allow(unused_imports))] // shadowed by std's inherent methods in test builds
use crate::numeric::FloatExt;
use crate::Field;

/// Blow-down floor: `w` below this is treated as a lost positivity, never
/// silently flushed.
pub const W_FLOOR: f64 = 1e-300;

/// Conformal exponents for effective dimension `d = n + m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    /// `4(d-1)/(d-2)`, the Laplacian coefficient of the transformation law.
    pub alpha: f64,
    /// `(d-2)/(4(d-1))`; `alpha·c_R = 1`.
    pub c_r: f64,
    /// `(d-2)/(2(d-1))`, the boundary-operator coefficient.
    pub c_h: f64,
    /// `(d+2)/(d-2)`, the critical curvature exponent `N`.
    pub p_crit: f64,
    /// `2d/(d-2)`, the measure exponent.
    pub p_vol: f64,
    /// `4/(d-2)`, the metric exponent.
    pub p_metric: f64,
    /// `2m/(d-2)`, the weight exponent: `φ = φ₀ − c_phi·ln w`. The measure
    /// identity `e^{-φ} dV_g = w^{p_vol} e^{-φ₀} dV_{g₀}` splits as
    /// `p_vol = c_phi + 2n/(d-2)` (weight part + volume-form Jacobian);
    /// zero when `m = 0`, so the weight never moves in the classical case.
    pub c_phi: f64,
}

impl Exponents {
    pub fn new(n: u32, m: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter {
                what: "n",
                details: alloc::format!("ambient dimension must be ≥ 3, got {n}"),
            });
        }
        if !m.is_finite() || m < 0.0 {
            return Err(Error::InvalidParameter {
                what: "m",
                details: alloc::format!("measure dimension must be finite and ≥ 0, got {m}"),
            });
        }
        let d = n as f64 + m;
        let e = Exponents {
            alpha: 4.0 * (d - 1.0) / (d - 2.0),
            c_r: (d - 2.0) / (4.0 * (d - 1.0)),
            c_h: (d - 2.0) / (2.0 * (d - 1.0)),
            p_crit: (d + 2.0) / (d - 2.0),
            p_vol: 2.0 * d / (d - 2.0),
            p_metric: 4.0 / (d - 2.0),
            c_phi: 2.0 * m / (d - 2.0),
        };
        // Adding measure dimensions is strictly sub-critical relative to the
        // classical exponent (monotone in d; nothing user-supplied can break
        // this once n ≥ 3 and m ≥ 0 hold).
        debug_assert!(
            m == 0.0 || e.p_crit < (n as f64 + 2.0) / (n as f64 - 2.0),
            "sub-criticality violated"
        );
        Ok(e)
    }

    pub fn for_background(bg: &Background) -> Self {
        // The background validated n and m at build time.
        Self::new(bg.spec.n, bg.spec.m).expect("background carries valid (n, m)")
    }
}

/// Checks finiteness, positivity and the blow-down floor for a conformal
/// factor.
pub(crate) fn check_w(w: &[f64]) -> Result<()> {
    for (i, &v) in w.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "w", index: i });
        }
        if v < W_FLOOR {
            return Err(Error::NonPositive { what: "w", index: i, value: v });
        }
    }
    Ok(())
}

/// State bundle of the flow: conformal factor plus eagerly cached derived
/// quantities, all consistent with `w`.
#[derive(Debug, Clone)]
pub struct ConformalState {
    pub w: Field,
    /// φ = φ₀ − (2m/(d−2))·ln w (the measure relation solved for φ).
    pub phi: Field,
    /// Weighted scalar curvature `R^m_φ` at nodes.
    pub curvature: Field,
    /// Measure-weighted average `r^m_φ`.
    pub r_avg: f64,
    /// Total weighted volume `∫ w^{p_vol} e^{-φ₀} dV`.
    pub volume: f64,
    pub t: f64,
}

impl ConformalState {
    /// Builds a consistent state from a conformal factor.
    pub fn from_w(bg: &Background, w: Field, t: f64) -> Result<Self> {
        check_len("w", &w, bg.node_count())?;
        check_w(&w)?;
        let curvature = curvature_from_w(bg, &w)?;
        let e = Exponents::for_background(bg);
        let wp: Vec<f64> = w.iter().map(|&v| powx(v, e.p_vol)).collect();
        let volume = pairwise_map_sum(w.len(), |i| wp[i] * bg.quad[i]);
        let r_avg =
            pairwise_map_sum(w.len(), |i| curvature[i] * wp[i] * bg.quad[i]) / volume;
        let phi = phi_from_w(bg, &w)?;
        Ok(ConformalState { w, phi, curvature, r_avg, volume, t })
    }
}

/// Applies the weighted conformal Laplacian pair: interior `L u` and
/// boundary `B u` (aligned with `bg.boundary_nodes`).
pub fn conformal_laplacian_apply(bg: &Background, u: &[f64]) -> Result<(Field, Vec<f64>)> {
    let e = Exponents::for_background(bg);
    let lap = bg.weighted_laplacian(u)?;
    let interior: Field =
        (0..u.len()).map(|i| -lap[i] + e.c_r * bg.r_bg[i] * u[i]).collect();
    let nd = bg.normal_derivative(u)?;
    let boundary: Vec<f64> = bg
        .boundary_nodes
        .iter()
        .zip(nd.iter())
        .zip(bg.h_bg.iter())
        .map(|((&b, &dnu), &h)| dnu + e.c_h * h * u[b])
        .collect();
    Ok((interior, boundary))
}

/// Weighted scalar curvature of the deformed structure via the
/// transformation law (see module docs).
pub fn curvature_from_w(bg: &Background, w: &[f64]) -> Result<Field> {
    check_len("w", w, bg.node_count())?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    let lap = bg.weighted_laplacian(w)?;
    let mut out = vec![0.0; w.len()];
    for i in 0..w.len() {
        out[i] = powx(w[i], -e.p_crit) * (-e.alpha * lap[i] + bg.r_bg[i] * w[i]);
    }
    Ok(out)
}

/// Weighted mean curvature of the deformed structure at true-boundary nodes.
pub fn mean_curvature_from_w(bg: &Background, w: &[f64]) -> Result<Vec<f64>> {
    check_len("w", w, bg.node_count())?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    let nd = bg.normal_derivative(w)?;
    Ok(bg
        .boundary_nodes
        .iter()
        .zip(nd.iter())
        .zip(bg.h_bg.iter())
        .map(|((&b, &dnu), &h)| {
            0.5 * e.alpha * powx(w[b], -0.5 * e.p_vol) * (dnu + e.c_h * h * w[b])
        })
        .collect())
}

/// Total weighted volume `∫ w^{p_vol} e^{-φ₀} dV`.
pub fn total_volume(bg: &Background, w: &[f64]) -> Result<f64> {
    check_len("w", w, bg.node_count())?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    Ok(pairwise_map_sum(w.len(), |i| powx(w[i], e.p_vol) * bg.quad[i]))
}

/// Measure-weighted average of the weighted scalar curvature.
pub fn average_curvature(bg: &Background, w: &[f64]) -> Result<f64> {
    let r = curvature_from_w(bg, w)?;
    let e = Exponents::for_background(bg);
    let vol = pairwise_map_sum(w.len(), |i| powx(w[i], e.p_vol) * bg.quad[i]);
    Ok(pairwise_map_sum(w.len(), |i| r[i] * powx(w[i], e.p_vol) * bg.quad[i]) / vol)
}

/// Scales `w` so the total weighted volume is 1; extrema locations are
/// unchanged (positive scalar multiple).
pub fn normalize_volume(bg: &Background, w: &[f64]) -> Result<Field> {
    let vol = total_volume(bg, w)?;
    let e = Exponents::for_background(bg);
    let s = powx(vol, -1.0 / e.p_vol);
    Ok(w.iter().map(|&v| s * v).collect())
}

/// Normalized energy of the conformal factor:
/// `E = (⟨w, Lw⟩_μ + ∮ w·Bw e^{-φ₀}dA) / volume^{(d-2)/d}`.
///
/// Scale-invariant in `w`; on volume-normalized factors with zero Neumann
/// data it agrees with `c_R·r` up to the discretization error.
pub fn energy(bg: &Background, w: &[f64]) -> Result<f64> {
    check_len("w", w, bg.node_count())?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    let (lw, bw) = conformal_laplacian_apply(bg, w)?;
    let num = pairwise_map_sum(w.len(), |i| w[i] * lw[i] * bg.quad[i])
        + pairwise_map_sum(bw.len(), |k| w[bg.boundary_nodes[k]] * bw[k] * bg.bquad[k]);
    let vol = pairwise_map_sum(w.len(), |i| powx(w[i], e.p_vol) * bg.quad[i]);
    // (d-2)/d = 2/p_vol.
    Ok(num * powx(vol, -2.0 / e.p_vol))
}

/// The weight of the deformed structure: `φ = φ₀ − (2m/(d−2))·ln w`, the
/// unique solution of `e^{-φ} dV_g = w^{p_vol} e^{-φ₀} dV_{g₀}` once the
/// volume-form Jacobian `dV_g = w^{2n/(d-2)} dV_{g₀}` is accounted for.
/// Along the flow it satisfies `∂φ/∂t = (m/2)(R^m_φ − r^m_φ)`; for `m = 0`
/// the weight is frozen at `φ₀ ≡ 0`.
pub fn phi_from_w(bg: &Background, w: &[f64]) -> Result<Field> {
    check_len("w", w, bg.node_count())?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    Ok((0..w.len()).map(|i| bg.phi0[i] - e.c_phi * w[i].ln()).collect())
}
