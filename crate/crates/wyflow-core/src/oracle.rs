//! Independent brute-force cross-checks for the primary code paths.
//!
//! Everything here is slower and simpler than the operators it validates and
//! deliberately shares no computational route with them: curvature through
//! the evolved-metric transformation instead of the linear-operator form,
//! eigenpairs through cyclic Jacobi on an independently assembled dense
//! matrix instead of the tridiagonal/Householder path, integration by parts
//! through nodal central-difference gradients instead of the flux form, and
//! the dissipation identity through dt-refinement of actual stepper output.
//! Background data (grids, weights, quadrature) is shared — it is the input,
//! not the thing under test.

use alloc::vec;
use alloc::vec::Vec;

use crate::background::{Background, Family};
use crate::conformal::{check_w, ConformalState, Exponents};
use crate::error::{check_len, check_positive, Error, Result};
use crate::flow::{step, FlowConfig};
#[cfg_attr(test, allow(unused_imports))] // shadowed by std's inherent methods in test builds
use crate::numeric::FloatExt;
use crate::numeric::{pairwise_map_sum, powx};
use crate::spectral::{EigenPair, Spectrum};
use crate::Field;

/// Centered first derivative with second-order one-sided ends.
fn fd_deriv(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    out
}

/// Standard 3-point second derivative with second-order 4-point one-sided
/// ends.
fn fd_second(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2;
    for i in 1..n - 1 {
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
    }
    out[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / h2;
    out
}

/// Fourth-order one-sided outward derivative at boundary node `b`; stride
/// `s` points inward in index units, `h` is the spacing along that axis.
/// The order matters: admissible fields have exact flux zero, and a
/// low-order stencil's truncation noise — O(h³) here since the O(h²) term
/// carries u‴, which also vanishes for such fields — gets amplified by the
/// boundary weight enough to rival the O(h²) interior quadrature gap on
/// coarse grids, wrecking refinement fits. Grids are ≥ 16 nodes per axis,
/// so the 5-point reach is always in range.
fn outward_deriv4(u: &[f64], b: usize, s: isize, h: f64) -> f64 {
    let at = |k: isize| u[(b as isize + k * s) as usize];
    (25.0 * at(0) - 48.0 * at(1) + 36.0 * at(2) - 16.0 * at(3) + 3.0 * at(4)) / (12.0 * h)
}

/// Weighted scalar curvature through the evolved pair `(g, φ)` rather than
/// the linear-operator transformation law: with `s = (2/(n+m−2))·ln w`,
///
/// ```text
/// g = e^{2s} g₀,                φ = φ₀ − m·s,
/// R_g   = e^{-2s}(R_{g₀} − 2(n−1)Δ_{g₀}s − (n−1)(n−2)|∇s|²),
/// Δ_g φ = e^{-2s}(Δ_{g₀}φ + (n−2)⟨∇s, ∇φ⟩),
/// |∇φ|²_g = e^{-2s}|∇φ|²_{g₀},
/// R^m_φ = R_g + 2Δ_gφ − ((m+1)/m)|∇φ|²_g     (last term absent at m = 0),
/// ```
///
/// everything finite-differenced from scratch. Restricted to flat intervals
/// — the route exists to catch transformation-law bugs, and one family with
/// closed-form bookkeeping suffices. Expects w > 0 with (at least
/// approximately) vanishing normal derivative so the one-sided end stencils
/// see smooth data.
pub fn direct_curvature(bg: &Background, w: &[f64]) -> Result<Field> {
    if !matches!(bg.spec.family, Family::FlatInterval { .. }) {
        return Err(Error::Unsupported {
            what: "direct curvature route outside flat intervals",
        });
    }
    let nn = bg.node_count();
    check_len("w", w, nn)?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    let (nd, m) = (bg.spec.n as f64, bg.spec.m);
    let h = bg.grid.spacing[0];
    let s: Vec<f64> = w.iter().map(|&v| 0.5 * e.p_metric * v.ln()).collect();
    let phi: Vec<f64> = (0..nn).map(|i| bg.phi0[i] - m * s[i]).collect();
    let s1 = fd_deriv(&s, h);
    let s2 = fd_second(&s, h);
    let p1 = fd_deriv(&phi, h);
    let p2 = fd_second(&phi, h);
    let mut out = vec![0.0; nn];
    for i in 0..nn {
        let em2s = (-2.0 * s[i]).exp();
        let r_g = em2s * (bg.spec.r_g() - 2.0 * (nd - 1.0) * s2[i]
            - (nd - 1.0) * (nd - 2.0) * s1[i] * s1[i]);
        let lap_phi = em2s * (p2[i] + (nd - 2.0) * s1[i] * p1[i]);
        let grad_phi2 = em2s * p1[i] * p1[i];
        out[i] = r_g + 2.0 * lap_phi
            - if m > 0.0 { (m + 1.0) / m * grad_phi2 } else { 0.0 };
    }
    Ok(out)
}

/// Integration-by-parts residual
/// `|∫⟨∇f,∇u⟩ e^{-φ₀}dV + ∫ f·Δ_{φ₀}u e^{-φ₀}dV − ∮ f·∂u/∂ν e^{-φ₀}dA|`.
///
/// The Laplacian goes through the operator under test; the gradient
/// integral is an independent nodal quadrature of central-difference
/// gradients and the boundary flux uses the oracle's own fourth-order
/// one-sided stencil, so the residual measures how far the flux form is
/// from a genuinely different discretization of the same identity — O(h²)
/// for smooth data, not roundoff.
pub fn ibp_residual(bg: &Background, f: &[f64], u: &[f64]) -> Result<f64> {
    let nn = bg.node_count();
    check_len("f", f, nn)?;
    check_len("u", u, nn)?;
    let grad = if bg.grid.is_1d() {
        let h = bg.grid.spacing[0];
        let fx = fd_deriv(f, h);
        let ux = fd_deriv(u, h);
        pairwise_map_sum(nn, |i| fx[i] * ux[i] * bg.quad[i])
    } else {
        let [nx, ny] = bg.grid.shape;
        let [hx, hy] = bg.grid.spacing;
        let mut fx = vec![0.0; nn];
        let mut ux = vec![0.0; nn];
        let mut fy = vec![0.0; nn];
        let mut uy = vec![0.0; nn];
        let mut row_f = vec![0.0; nx];
        let mut row_u = vec![0.0; nx];
        for iy in 0..ny {
            row_f.copy_from_slice(&f[iy * nx..(iy + 1) * nx]);
            row_u.copy_from_slice(&u[iy * nx..(iy + 1) * nx]);
            let df = fd_deriv(&row_f, hx);
            let du = fd_deriv(&row_u, hx);
            fx[iy * nx..(iy + 1) * nx].copy_from_slice(&df);
            ux[iy * nx..(iy + 1) * nx].copy_from_slice(&du);
        }
        let mut col_f = vec![0.0; ny];
        let mut col_u = vec![0.0; ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col_f[iy] = f[iy * nx + ix];
                col_u[iy] = u[iy * nx + ix];
            }
            let df = fd_deriv(&col_f, hy);
            let du = fd_deriv(&col_u, hy);
            for iy in 0..ny {
                fy[iy * nx + ix] = df[iy];
                uy[iy * nx + ix] = du[iy];
            }
        }
        pairwise_map_sum(nn, |i| (fx[i] * ux[i] + fy[i] * uy[i]) * bg.quad[i])
    };
    let lap = bg.weighted_laplacian(u)?;
    let bulk = pairwise_map_sum(nn, |i| f[i] * lap[i] * bg.quad[i]);
    let flux_at = |i: usize| -> f64 {
        if bg.grid.is_1d() {
            let h = bg.grid.spacing[0];
            outward_deriv4(u, i, if i == 0 { 1 } else { -1 }, h)
        } else {
            // Corner convention matches the primary: average the two edges.
            let [nx, ny] = bg.grid.shape;
            let [hx, hy] = bg.grid.spacing;
            let (ix, iy) = (i % nx, i / nx);
            let mut acc = 0.0;
            let mut sides = 0u32;
            if ix == 0 {
                acc += outward_deriv4(u, i, 1, hx);
                sides += 1;
            }
            if ix == nx - 1 {
                acc += outward_deriv4(u, i, -1, hx);
                sides += 1;
            }
            if iy == 0 {
                acc += outward_deriv4(u, i, nx as isize, hy);
                sides += 1;
            }
            if iy == ny - 1 {
                acc += outward_deriv4(u, i, -(nx as isize), hy);
                sides += 1;
            }
            acc / sides as f64
        }
    };
    let boundary = pairwise_map_sum(bg.boundary_nodes.len(), |k| {
        let i = bg.boundary_nodes[k];
        f[i] * flux_at(i) * bg.bquad[k]
    });
    Ok((grad + bulk - boundary).abs())
}

/// Cyclic Jacobi diagonalization of a symmetric matrix (flat row-major,
/// destroyed in place); accumulates rotations into `v` (initialized to the
/// identity here). Classic threshold-free cyclic sweeps; converges
/// quadratically once off-diagonal mass is small.
fn jacobi_eigen(a: &mut [f64], n: usize, v: &mut [f64]) -> Result<()> {
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let frob: f64 = pairwise_map_sum(n * n, |ij| a[ij] * a[ij]).sqrt();
    if frob == 0.0 {
        return Ok(());
    }
    let target = 1e-15 * frob;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= target {
            return Ok(());
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    Err(Error::SolveFailure {
        what: "jacobi_eigen",
        details: "off-diagonal norm did not reach the target in 60 sweeps".into(),
    })
}

/// First `k` eigenpairs of the linearized problem `K ψ = λ·(μ ρ) ψ` by a
/// from-scratch dense assembly and cyclic Jacobi — no code shared with the
/// spectral module's tridiagonal/Householder route. Capped at 512 nodes
/// (dense O(n³) is the point, not a cost worth paying at scale). `rho` is
/// the multiplier weight, `w_∞^{p_metric}` for a converged factor.
pub fn dense_reference_spectrum(bg: &Background, rho: &[f64], k: usize) -> Result<Spectrum> {
    let n = bg.node_count();
    check_len("rho", rho, n)?;
    check_positive("rho", rho)?;
    if n > 512 {
        return Err(Error::InvalidParameter {
            what: "node count",
            details: alloc::format!("dense reference route is capped at 512 nodes, got {n}"),
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter {
            what: "k",
            details: alloc::format!("requested {k} of {n} possible eigenpairs"),
        });
    }
    let e = Exponents::for_background(bg);
    let mut kmat = vec![0.0; n * n];
    {
        // Dirichlet-form conductances from the face data, written as a
        // quadratic form: κ·(u_i − u_j)² contributes to four entries.
        let mut couple = |i: usize, j: usize, c: f64| {
            kmat[i * n + i] += c;
            kmat[j * n + j] += c;
            kmat[i * n + j] -= c;
            kmat[j * n + i] -= c;
        };
        if bg.grid.is_1d() {
            let h = bg.grid.spacing[0];
            let aperp = bg.spec.transverse_area();
            for i in 0..n - 1 {
                couple(i, i + 1, e.alpha * aperp * bg.face_x[i] / h);
            }
        } else {
            let [nx, ny] = bg.grid.shape;
            for iy in 0..ny {
                for ix in 0..nx - 1 {
                    let i = iy * nx + ix;
                    couple(i, i + 1, e.alpha * bg.face_x[iy * (nx - 1) + ix]);
                }
            }
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    couple(i, i + nx, e.alpha * bg.face_y[iy * nx + ix]);
                }
            }
        }
    }
    for i in 0..n {
        kmat[i * n + i] += bg.quad[i] * bg.r_bg[i];
    }
    for (kb, &bnode) in bg.boundary_nodes.iter().enumerate() {
        kmat[bnode * n + bnode] += e.alpha * e.c_h * bg.bquad[kb] * bg.h_bg[kb];
    }
    let b: Vec<f64> = (0..n).map(|i| bg.quad[i] * rho[i]).collect();
    // Symmetric reduction A = D K D with D = diag(b^{-1/2}).
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = kmat[i * n + j] / (b[i] * b[j]).sqrt();
        }
    }
    let mut vmat = vec![0.0; n * n];
    jacobi_eigen(&mut a, n, &mut vmat)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| {
        a[i * n + i].partial_cmp(&a[j * n + j]).expect("eigenvalues are finite")
    });
    let mut pairs = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let lambda = a[col * n + col];
        let mut psi: Field = (0..n).map(|i| vmat[i * n + col] / b[i].sqrt()).collect();
        // Deterministic sign: largest-magnitude component positive.
        let mut lead = 0usize;
        for i in 1..n {
            if psi[i].abs() > psi[lead].abs() {
                lead = i;
            }
        }
        if psi[lead] < 0.0 {
            for p in psi.iter_mut() {
                *p = -*p;
            }
        }
        pairs.push(EigenPair { lambda, psi });
    }
    Ok(Spectrum { pairs, rho: rho.to_vec() })
}

/// Residual of the dissipation identity on a centered three-state stencil:
/// `|(r(t+dt) − r(t−dt))/(2dt) + ((n+m−2)/2)·∫(r−R)² w^{p_vol} e^{-φ₀}dV|`
/// with the integral on the middle state.
pub fn dr_identity_residual(
    bg: &Background,
    prev: &ConformalState,
    mid: &ConformalState,
    next: &ConformalState,
    dt: f64,
) -> Result<f64> {
    let n = bg.node_count();
    check_len("w(prev)", &prev.w, n)?;
    check_len("w(mid)", &mid.w, n)?;
    check_len("w(next)", &next.w, n)?;
    let e = Exponents::for_background(bg);
    let c_diss = (bg.spec.n as f64 + bg.spec.m - 2.0) / 2.0;
    let p = pairwise_map_sum(n, |i| {
        let d = mid.r_avg - mid.curvature[i];
        d * d * powx(mid.w[i], e.p_vol) * bg.quad[i]
    });
    Ok(((next.r_avg - prev.r_avg) / (2.0 * dt) + c_diss * p).abs())
}

/// dt-refinement crosscheck of the dissipation identity along stepper
/// output.
#[derive(Debug, Clone, Copy)]
pub struct DrDtCrosscheck {
    /// Residual of the centered stencil over two steps of size `dt`.
    pub residual_coarse: f64,
    /// Same stencil over two steps of size `dt/2` (same anchor time).
    pub residual_fine: f64,
    /// `residual_coarse / residual_fine`; ≈ 2 for a first-order stepper.
    /// `None` when the fine residual sits at roundoff (steady data — the
    /// ratio is undefined there).
    pub ratio: Option<f64>,
}

/// Steps the flow twice at `dt` and twice at `dt/2` from the same state and
/// compares the identity residuals; a first-order-consistent stepper halves
/// the residual, so the ratio sits near 2. Volume renormalization is forced
/// off inside (it perturbs the identity at the same O(dt) order and would
/// muddy the measurement).
pub fn dr_dt_crosscheck(
    bg: &Background,
    w0: &[f64],
    dt: f64,
    config: &FlowConfig,
) -> Result<DrDtCrosscheck> {
    let mut cfg = config.clone();
    cfg.renormalize_each_step = false;
    let s0 = ConformalState::from_w(bg, w0.to_vec(), 0.0)?;
    let residual_at = |h: f64| -> Result<f64> {
        let s1 = step(bg, &s0, h, &cfg)?;
        let s2 = step(bg, &s1, h, &cfg)?;
        dr_identity_residual(bg, &s0, &s1, &s2, h)
    };
    let residual_coarse = residual_at(dt)?;
    let residual_fine = residual_at(0.5 * dt)?;
    let floor = 1e-13 * (1.0 + s0.r_avg.abs());
    let ratio =
        if residual_fine > floor { Some(residual_coarse / residual_fine) } else { None };
    Ok(DrDtCrosscheck { residual_coarse, residual_fine, ratio })
}

/// A mesh-refinement study: error norms per size and the convergence order
/// fitted by log-log least squares against h ∝ 1/(size−1).
#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub sizes: Vec<usize>,
    pub errors: Vec<f64>,
    pub order: f64,
}

impl RefinementReport {
    /// Fits the order from at least three (size, error) samples; errors must
    /// be positive (an exactly-zero error has no order to fit).
    pub fn fit(sizes: &[usize], errors: &[f64]) -> Result<RefinementReport> {
        if sizes.len() < 3 || errors.len() != sizes.len() {
            return Err(Error::InvalidParameter {
                what: "refinement samples",
                details: alloc::format!(
                    "need at least three matched (size, error) pairs, got {} and {}",
                    sizes.len(),
                    errors.len()
                ),
            });
        }
        for (k, &err) in errors.iter().enumerate() {
            if !(err > 0.0 && err.is_finite()) {
                return Err(Error::InvalidParameter {
                    what: "refinement errors",
                    details: alloc::format!("error {k} is {err}; must be positive and finite"),
                });
            }
            if sizes[k] < 2 {
                return Err(Error::InvalidParameter {
                    what: "refinement sizes",
                    details: alloc::format!("size {k} is {}; must be ≥ 2", sizes[k]),
                });
            }
        }
        let n = sizes.len();
        let xs: Vec<f64> = sizes.iter().map(|&s| (1.0 / (s as f64 - 1.0)).ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|&e| e.ln()).collect();
        let xm = pairwise_map_sum(n, |i| xs[i]) / n as f64;
        let ym = pairwise_map_sum(n, |i| ys[i]) / n as f64;
        let sxx = pairwise_map_sum(n, |i| (xs[i] - xm) * (xs[i] - xm));
        let sxy = pairwise_map_sum(n, |i| (xs[i] - xm) * (ys[i] - ym));
        Ok(RefinementReport { sizes: sizes.to_vec(), errors: errors.to_vec(), order: sxy / sxx })
    }
}

/// Seeded band-limited test field: `1 + Σ_k c_k·cos(kπx/L)` (tensor cosines
/// in 2-d), with coefficients from a deterministic generator scaled so the
/// total perturbation stays below `amp`. Cosine modes satisfy the Neumann
/// condition analytically, so these fields are legal initial data and smooth
/// enough for the O(h²) error model of every oracle here.
pub fn seeded_neumann_field(
    bg: &Background,
    seed: u64,
    modes: usize,
    amp: f64,
) -> Result<Field> {
    if !(amp > 0.0 && amp < 1.0) {
        return Err(Error::InvalidParameter {
            what: "amp",
            details: alloc::format!("perturbation amplitude must lie in (0, 1), got {amp}"),
        });
    }
    if modes == 0 {
        return Err(Error::InvalidParameter {
            what: "modes",
            details: "need at least one mode".into(),
        });
    }
    // splitmix64 round to decorrelate nearby seeds, then xorshift*;
    // uniform in [-1, 1].
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    state = (state ^ (state >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    state = (state ^ (state >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    state ^= state >> 31;
    if state == 0 {
        state = 0x9E37_79B9_7F4A_7C15;
    }
    let mut unit = move || -> f64 {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        let bits = state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11;
        bits as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let nn = bg.node_count();
    let lx = bg.grid.extents[0][1] - bg.grid.extents[0][0];
    let pi = core::f64::consts::PI;
    let mut out = vec![0.0; nn];
    if bg.grid.is_1d() {
        let cs: Vec<f64> = (0..modes).map(|_| unit()).collect();
        let total: f64 = cs.iter().map(|c| c.abs()).sum();
        let scale = if total > 0.0 { amp / total } else { 0.0 };
        for (i, o) in out.iter_mut().enumerate() {
            let x = bg.grid.coord(i)[0] - bg.grid.extents[0][0];
            let mut v = 1.0;
            for (kk, &c) in cs.iter().enumerate() {
                v += scale * c * ((kk + 1) as f64 * pi * x / lx).cos();
            }
            *o = v;
        }
    } else {
        let ly = bg.grid.extents[1][1] - bg.grid.extents[1][0];
        // Axis modes plus one tensor mode per k, all seeded.
        let cs: Vec<[f64; 3]> = (0..modes).map(|_| [unit(), unit(), unit()]).collect();
        let total: f64 = cs.iter().map(|c| c[0].abs() + c[1].abs() + c[2].abs()).sum();
        let scale = if total > 0.0 { amp / total } else { 0.0 };
        for (i, o) in out.iter_mut().enumerate() {
            let x = bg.grid.coord(i)[0] - bg.grid.extents[0][0];
            let y = bg.grid.coord(i)[1] - bg.grid.extents[1][0];
            let mut v = 1.0;
            for (kk, c) in cs.iter().enumerate() {
                let k1 = (kk + 1) as f64;
                let cx = (k1 * pi * x / lx).cos();
                let cy = (k1 * pi * y / ly).cos();
                v += scale * (c[0] * cx + c[1] * cy + c[2] * cx * cy);
            }
            *o = v;
        }
    }
    Ok(out)
}
