//! Time integration of the weighted Yamabe flow with boundary, plus the
//! monitor suite asserting its structural identities along runs.
//!
//! The normalized flow moves the conformal factor by
//!
//! ```text
//! ∂w/∂t = -c₀ (R^m_φ - r^m_φ) w     in M,      c₀ = (n+m-2)/4,
//! ∂w/∂ν = 0                          on ∂M,
//! ```
//!
//! which keeps the total weighted volume constant and dissipates the average
//! curvature: semi-discretely (thanks to the exactly self-adjoint flux
//! Laplacian) `dr/dt = -((n+m-2)/2)·∫(R-r)² e^{-φ}dV ≤ 0` holds with no
//! spatial error term, so the per-step diagnostics below measure pure time
//! discretization error.
//!
//! Two steppers are provided: explicit Euler (auditable, step size bounded
//! by the parabolic limit) and a linearly implicit backward-Euler solve of
//! the `w^{p_crit}` form of the equation whose fixed points are exactly the
//! discrete steady states (1-d grids only).

use alloc::vec;
use alloc::vec::Vec;

use crate::background::Background;
use crate::conformal::{check_w, energy, normalize_volume, ConformalState, Exponents, W_FLOOR};
use crate::error::{check_len, Error, Result};
use crate::linalg::thomas_solve;
#[cfg_attr(test, allow(unused_imports))] // shadowed by std's inherent methods in test builds
use crate::numeric::FloatExt;
use crate::numeric::{pairwise_map_sum, powx};
use crate::spectral::{self, Case};
use crate::Field;

/// Steady-state residual bound required (on top of `tol_conv`) before a run
/// reports convergence.
pub const TOL_RESIDUAL: f64 = 1e-5;
/// Per-step slack for the monotonicity of r: `r(t_{k+1}) ≤ r(t_k) +
/// TOL_MONO·(1+|r(t_k)|)`.
pub const TOL_MONO: f64 = 1e-10;
/// Slack for the curvature maximum principle: `min R(t) ≥ min{min R(0), 0}
/// − TOL_MP·(1 + |min R(0)|)`.
pub const TOL_MP: f64 = 1e-6;
/// Slack (absorbing the O(h²) quadrature defect) for the Rayleigh-bound
/// monitor `c_R·r(t) ≥ Y_est − TOL_RAYLEIGH·(1+|r|)`.
pub const TOL_RAYLEIGH: f64 = 1e-4;
/// Looseness of the initial-data Neumann pre-check relative to `‖w0‖_∞`
/// (the companion's initial-data builder projects to ~roundoff; this guard
/// only rejects grossly incompatible fields).
const TOL_NEUMANN_PRE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    ExplicitEuler,
    SemiImplicit,
}

/// Step-size policy. `Adaptive` resolves once per run against the parabolic
/// bound `dt = s_cfl·h²/alpha` on the run's mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    Adaptive { s_cfl: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub stepper: Stepper,
    pub dt: DtPolicy,
    /// Stop when `sup|R − r| < tol_conv·(1 + |r|)` (and the steady residual
    /// is below [`TOL_RESIDUAL`]).
    pub tol_conv: f64,
    pub max_steps: u64,
    pub renormalize_each_step: bool,
    pub monitor_stride: u64,
    /// Exponent of the Λ_p functional; must lie in the open interval
    /// `(max{(n+m)/2, 2}, (n+m+2)/2)`. `None`: the interval midpoint.
    pub p_lyapunov: Option<f64>,
    /// Curvature shift making `R + σ ≥ 1` at the start; `None`: computed
    /// from the initial state as `max{sup(1 − R(0)), 1}`.
    pub sigma: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            stepper: Stepper::ExplicitEuler,
            dt: DtPolicy::Adaptive { s_cfl: 0.2 },
            tol_conv: 1e-6,
            max_steps: 500_000,
            renormalize_each_step: true,
            monitor_stride: 100,
            p_lyapunov: None,
            sigma: None,
        }
    }
}

impl FlowConfig {
    /// Resolves the step size and the Λ_p exponent against a background and
    /// validates every invariant of the config.
    pub fn resolve(&self, bg: &Background) -> Result<(f64, f64)> {
        let e = Exponents::for_background(bg);
        let dt = match self.dt {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Adaptive { s_cfl } => {
                if !(s_cfl > 0.0 && s_cfl.is_finite()) {
                    return Err(Error::InvalidParameter {
                        what: "s_cfl",
                        details: alloc::format!("safety factor must be positive, got {s_cfl}"),
                    });
                }
                let h = bg.spacing_min();
                s_cfl * h * h / e.alpha
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "dt",
                details: alloc::format!("step size must be positive and finite, got {dt}"),
            });
        }
        if !(self.tol_conv > 0.0) {
            return Err(Error::InvalidParameter {
                what: "tol_conv",
                details: alloc::format!("convergence tolerance must be positive, got {}", self.tol_conv),
            });
        }
        if self.monitor_stride == 0 {
            return Err(Error::InvalidParameter {
                what: "monitor_stride",
                details: "stride must be at least 1".into(),
            });
        }
        let d = bg.spec.n as f64 + bg.spec.m;
        let (plo, phi) = ((d / 2.0).max(2.0), (d + 2.0) / 2.0);
        let p = match self.p_lyapunov {
            None => 0.5 * (plo + phi),
            Some(p) => {
                if !(p > plo && p < phi) {
                    return Err(Error::InvalidParameter {
                        what: "p_lyapunov",
                        details: alloc::format!("p = {p} outside the admissible interval ({plo}, {phi})"),
                    });
                }
                p
            }
        };
        if let Some(s) = self.sigma {
            if !(s >= 1.0) {
                return Err(Error::InvalidParameter {
                    what: "sigma",
                    details: alloc::format!("sigma must be ≥ 1, got {s}"),
                });
            }
        }
        Ok((dt, p))
    }
}

/// One monitor row. Column order is fixed by [`TraceRow::COLUMNS`] and is
/// what the CSV serializer in the companion crate writes.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: f64,
    pub r: f64,
    /// Total weighted volume recomputed at the row (drifts O(dt²) per step
    /// when per-step renormalization is off; pinned to 1 otherwise).
    pub volume_raw: f64,
    pub min_r: f64,
    pub max_r: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub sup_gap: f64,
    pub energy: f64,
    pub lambda_p: f64,
    pub harnack_min: f64,
    pub harnack_max: f64,
    pub dphi_dt_min: f64,
}

impl TraceRow {
    pub const COLUMNS: [&'static str; 13] = [
        "t",
        "r",
        "volume_raw",
        "min_R",
        "max_R",
        "min_w",
        "max_w",
        "sup_gap",
        "energy",
        "lambda_p",
        "harnack_ratio_min",
        "harnack_ratio_max",
        "dphi_dt_min",
    ];

    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.r,
            self.volume_raw,
            self.min_r,
            self.max_r,
            self.min_w,
            self.max_w,
            self.sup_gap,
            self.energy,
            self.lambda_p,
            self.harnack_min,
            self.harnack_max,
            self.dphi_dt_min,
        ]
    }
}

/// Stride-sampled monitor trace of a run.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    /// Shift used in the Λ_p column.
    pub sigma: f64,
    pub p_lyapunov: f64,
    /// The run's convergence tolerance (defines "usable rows" for the decay
    /// fit).
    pub tol_conv: f64,
}

impl FlowTrace {
    /// Decay-exponent fit over this trace against a given `r_inf` (see
    /// [`spectral::fit_decay_exponent`]).
    pub fn fit_decay_exponent(&self, r_inf: f64) -> Result<spectral::DecayFit> {
        let t: Vec<f64> = self.rows.iter().map(|r| r.t).collect();
        let r: Vec<f64> = self.rows.iter().map(|r| r.r).collect();
        spectral::fit_decay_exponent(&t, &r, r_inf, self.tol_conv)
    }
}

/// Full-resolution per-step extremes accumulated inside the stepping loop —
/// several flow invariants quantify over *every* accepted step while the
/// trace is stride-sampled.
#[derive(Debug, Clone, Copy)]
pub struct RunExtrema {
    /// max over steps of `(r(t_{k+1}) − r(t_k))/(1 + |r(t_k)|)`.
    pub max_r_increase: f64,
    /// min over steps of `min R(t_k) − min{min R(0), 0}`.
    pub min_r_margin: f64,
    /// max over steps of the pre-renormalization `|V(t_{k+1}) − V(t_k)|`.
    pub max_step_volume_drift: f64,
    /// max over steps of `|V − 1|` measured on the stored (post-
    /// renormalization, if enabled) state.
    pub max_volume_deviation: f64,
    pub min_w: f64,
    pub max_w: f64,
    /// max over consecutive trace rows of `(Λ_p(next) − Λ_p(prev))/(1+|Λ_p(prev)|)`.
    pub max_lambda_p_increase: f64,
    /// min over trace rows of `c_R·r − Y_est` (Rayleigh-bound consistency).
    pub min_rayleigh_margin: f64,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub w_final: Field,
    pub converged: bool,
    pub steps_taken: u64,
    /// The final (smallest, by monotonicity) observed average curvature.
    pub r_inf_estimate: f64,
    pub steady_residual: f64,
    pub case: Case,
    pub extrema: RunExtrema,
}

/// Initial-state scalars that several monitor residuals are defined
/// against.
#[derive(Debug, Clone, Copy)]
pub struct RunBaseline {
    pub min_r0: f64,
    pub r0: f64,
}

impl RunBaseline {
    pub fn of(state: &ConformalState) -> RunBaseline {
        let min_r0 = state.curvature.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        RunBaseline { min_r0, r0: state.r_avg }
    }
}

/// Residual record of the dynamic identities between two consecutive
/// states.
#[derive(Debug, Clone, Copy)]
pub struct MonitorRecord {
    /// (a) `|Δr/Δt + ((n+m−2)/2)·∫(r−R)² e^{-φ}dV|`, with the integral
    /// evaluated on the midpoint state (w averaged, caches rebuilt).
    pub dr_identity: f64,
    /// The dissipation term itself, `((n+m−2)/2)·∫(r−R)²e^{-φ}dV`, for
    /// relative comparisons.
    pub dissipation: f64,
    /// (b) `min R(t_next) − min{min R(0), 0}` — nonnegative up to
    /// [`TOL_MP`] by the maximum principle.
    pub min_r_margin: f64,
    /// (c) `min_nodes Δφ/Δt − (m/2)(min R(0) − r(0))` — recorded
    /// diagnostic; asserted only at steady states (see module docs of the
    /// conformal weight convention).
    pub dphi_margin: f64,
}

/// Scratch buffers reused across steps of a run.
struct Workspace {
    lap: Vec<f64>,
    wnew: Vec<f64>,
    /// Semi-implicit bands and right-hand side.
    sub: Vec<f64>,
    dia: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            lap: vec![0.0; n],
            wnew: vec![0.0; n],
            sub: vec![0.0; n.saturating_sub(1)],
            dia: vec![0.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
            rhs: vec![0.0; n],
        }
    }
}

/// Mutable loop state: the factor plus every cache the stepper and the
/// monitors read.
struct Cursor {
    w: Vec<f64>,
    /// w^{p_vol} at nodes.
    wp: Vec<f64>,
    /// Weighted scalar curvature at nodes.
    rf: Vec<f64>,
    r: f64,
    vol: f64,
    gap: f64,
    min_r: f64,
    max_r: f64,
    min_w: f64,
    max_w: f64,
    t: f64,
}

/// Max-norm steady residual of the cursor state, reusing its caches:
/// `max_i |(R_i − r)·w_i^{p_crit}| / max_i w_i` (identical to
/// [`steady_residual`] by the definition of R).
fn residual_of(e: &Exponents, cur: &Cursor) -> f64 {
    let mut num = 0.0f64;
    for i in 0..cur.w.len() {
        num = num.max(((cur.rf[i] - cur.r) * powx(cur.w[i], e.p_crit)).abs());
    }
    num / cur.max_w
}

/// Rebuilds all caches of `cur` from `cur.w`.
fn refresh(bg: &Background, e: &Exponents, ws: &mut Workspace, cur: &mut Cursor) {
    let n = cur.w.len();
    bg.weighted_laplacian_into(&cur.w, &mut ws.lap);
    for i in 0..n {
        cur.wp[i] = powx(cur.w[i], e.p_vol);
        cur.rf[i] =
            powx(cur.w[i], -e.p_crit) * (-e.alpha * ws.lap[i] + bg.r_bg[i] * cur.w[i]);
    }
    cur.vol = pairwise_map_sum(n, |i| cur.wp[i] * bg.quad[i]);
    cur.r = pairwise_map_sum(n, |i| cur.rf[i] * cur.wp[i] * bg.quad[i]) / cur.vol;
    let mut gap = 0.0f64;
    let (mut min_r, mut max_r) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_w, mut max_w) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        gap = gap.max((cur.rf[i] - cur.r).abs());
        min_r = min_r.min(cur.rf[i]);
        max_r = max_r.max(cur.rf[i]);
        min_w = min_w.min(cur.w[i]);
        max_w = max_w.max(cur.w[i]);
    }
    cur.gap = gap;
    cur.min_r = min_r;
    cur.max_r = max_r;
    cur.min_w = min_w;
    cur.max_w = max_w;
}

/// Computes the next factor into `ws.wnew`. Returns the minimum of the new
/// factor (blow-down checked by the caller against the step index).
fn advance_w(
    bg: &Background,
    e: &Exponents,
    ws: &mut Workspace,
    cur: &Cursor,
    dt: f64,
    stepper: Stepper,
) -> Result<f64> {
    let n = cur.w.len();
    let c0 = (bg.spec.n as f64 + bg.spec.m - 2.0) / 4.0;
    match stepper {
        Stepper::ExplicitEuler => {
            for i in 0..n {
                ws.wnew[i] = cur.w[i] * (1.0 - dt * c0 * (cur.rf[i] - cur.r));
            }
        }
        Stepper::SemiImplicit => {
            if !bg.grid.is_1d() {
                return Err(Error::Unsupported {
                    what: "semi-implicit stepper on 2-d grids",
                });
            }
            // Backward-Euler on the w^{p_crit} form:
            //   w_k^{N-1}(w_{k+1} − w_k)/dt =
            //     -c₀[-alpha·Δ_{φ₀}w_{k+1} + R_bg·w_{k+1} − r_k·w_k^{N-1}·w_{k+1}],
            // whose fixed points are exactly the discrete steady states.
            let h = bg.grid.spacing[0];
            for i in 0..n {
                let wm = powx(cur.w[i], e.p_metric); // w^{N-1}
                let kl = if i > 0 { bg.face_x[i - 1] / (h * bg.mass[i]) } else { 0.0 };
                let kr = if i + 1 < n { bg.face_x[i] / (h * bg.mass[i]) } else { 0.0 };
                ws.dia[i] =
                    wm / dt + c0 * (e.alpha * (kl + kr) + bg.r_bg[i] - cur.r * wm);
                if i > 0 {
                    ws.sub[i - 1] = -c0 * e.alpha * kl;
                }
                if i + 1 < n {
                    ws.sup[i] = -c0 * e.alpha * kr;
                }
                ws.rhs[i] = wm * cur.w[i] / dt;
            }
            let x = thomas_solve(&ws.sub, &ws.dia, &ws.sup, &ws.rhs)?;
            ws.wnew.copy_from_slice(&x);
        }
    }
    let mut min_new = f64::INFINITY;
    for &v in ws.wnew.iter() {
        if !(v > W_FLOOR) {
            min_new = if v.is_nan() { f64::NAN } else { min_new.min(v) };
            return Ok(min_new);
        }
        min_new = min_new.min(v);
    }
    Ok(min_new)
}

/// One flow step. The update is pointwise (explicit) or a tridiagonal solve
/// (semi-implicit); the flux-form curvature already encodes the ghost-
/// reflected Neumann condition, so the update preserves it with no explicit
/// correction. Renormalizes the volume if the config says so, then rebuilds
/// every cache.
pub fn step(
    bg: &Background,
    state: &ConformalState,
    dt: f64,
    config: &FlowConfig,
) -> Result<ConformalState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            what: "dt",
            details: alloc::format!("step size must be positive and finite, got {dt}"),
        });
    }
    let n = bg.node_count();
    check_len("w", &state.w, n)?;
    let e = Exponents::for_background(bg);
    let mut ws = Workspace::new(n);
    let cur = Cursor {
        w: state.w.clone(),
        wp: state.w.iter().map(|&v| powx(v, e.p_vol)).collect(),
        rf: state.curvature.clone(),
        r: state.r_avg,
        vol: state.volume,
        gap: 0.0,
        min_r: 0.0,
        max_r: 0.0,
        min_w: 0.0,
        max_w: 0.0,
        t: state.t,
    };
    let min_new = advance_w(bg, &e, &mut ws, &cur, dt, config.stepper)?;
    if !(min_new > W_FLOOR) {
        return Err(Error::BlowDown { step: 0, min_w: min_new });
    }
    let mut wnext = ws.wnew;
    if config.renormalize_each_step {
        wnext = normalize_volume(bg, &wnext)?;
    }
    ConformalState::from_w(bg, wnext, state.t + dt)
}

/// Max-norm steady-state residual
/// `‖alpha·Δ_{φ₀}w − R^m_{φ₀}w + r·w^{p_crit}‖_∞ / ‖w‖_∞`.
pub fn steady_residual(bg: &Background, w: &[f64], r: f64) -> Result<f64> {
    check_len("w", w, bg.node_count())?;
    check_w(w)?;
    let e = Exponents::for_background(bg);
    let lap = bg.weighted_laplacian(w)?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..w.len() {
        let res = e.alpha * lap[i] - bg.r_bg[i] * w[i] + r * powx(w[i], e.p_crit);
        num = num.max(res.abs());
        den = den.max(w[i].abs());
    }
    Ok(num / den)
}

/// The Λ_p functional `∫(R+σ)^{p−1} e^{-φ}dV`; errors if `R + σ ≤ 0`
/// anywhere (that would mean the curvature maximum principle failed).
pub fn lyapunov_lp(bg: &Background, state: &ConformalState, sigma: f64, p: f64) -> Result<f64> {
    let n = bg.node_count();
    check_len("w", &state.w, n)?;
    let e = Exponents::for_background(bg);
    lambda_p_of(bg, &e, &state.curvature, &state.w, sigma, p)
}

fn lambda_p_of(
    bg: &Background,
    e: &Exponents,
    rf: &[f64],
    w: &[f64],
    sigma: f64,
    p: f64,
) -> Result<f64> {
    for (i, &rv) in rf.iter().enumerate() {
        if rv + sigma <= 0.0 {
            return Err(Error::NonPositive { what: "R + sigma", index: i, value: rv + sigma });
        }
    }
    Ok(pairwise_map_sum(rf.len(), |i| {
        powx(rf[i] + sigma, p - 1.0) * powx(w[i], e.p_vol) * bg.quad[i]
    }))
}

/// Dynamic-identity residuals between two consecutive states (see
/// [`MonitorRecord`]). `baseline` carries the run-initial scalars that the
/// maximum-principle and weight-derivative bounds are stated against.
pub fn monitor_identities(
    bg: &Background,
    baseline: &RunBaseline,
    prev: &ConformalState,
    next: &ConformalState,
    dt: f64,
) -> Result<MonitorRecord> {
    let n = bg.node_count();
    check_len("w(prev)", &prev.w, n)?;
    check_len("w(next)", &next.w, n)?;
    let e = Exponents::for_background(bg);
    let c_diss = (bg.spec.n as f64 + bg.spec.m - 2.0) / 2.0;
    let w_mid: Field = (0..n).map(|i| 0.5 * (prev.w[i] + next.w[i])).collect();
    let mid = ConformalState::from_w(bg, w_mid, 0.5 * (prev.t + next.t))?;
    let p_mid = pairwise_map_sum(n, |i| {
        let d = mid.r_avg - mid.curvature[i];
        d * d * powx(mid.w[i], e.p_vol) * bg.quad[i]
    });
    let dissipation = c_diss * p_mid;
    let dr_identity = ((next.r_avg - prev.r_avg) / dt + dissipation).abs();
    let min_r_next = next.curvature.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let min_r_margin = min_r_next - baseline.min_r0.min(0.0);
    let mut dphi_min = f64::INFINITY;
    for i in 0..n {
        dphi_min = dphi_min.min((next.phi[i] - prev.phi[i]) / dt);
    }
    let dphi_margin = dphi_min - 0.5 * bg.spec.m * (baseline.min_r0 - baseline.r0);
    Ok(MonitorRecord { dr_identity, dissipation, min_r_margin, dphi_margin })
}

/// Per-row Harnack ratio pairs `(w_min^N(t)/w_min^N(0), w_max^N(t)/w_max^N(0))`
/// read off a trace. In the zero case with r(0) > 0 the first component
/// dominates the second at every row.
pub fn harnack_ratios(trace: &FlowTrace) -> Vec<(f64, f64)> {
    trace.rows.iter().map(|row| (row.harnack_min, row.harnack_max)).collect()
}

/// Barrier diagnostics of a negative-case run.
#[derive(Debug, Clone, Copy)]
pub struct NegativeBarriers {
    /// Whether r(t) reached negative values within the trace.
    pub crossing_reached: bool,
    /// First trace time with r < 0 (NaN when not reached).
    pub t_cross: f64,
    /// min over trace rows of the nodal minimum of w.
    pub min_w: f64,
    /// The upper-barrier level `max{w_max^{N−1}(t₀), max|R_bg|/|r(t₀)|}`.
    pub bound: f64,
    /// max over rows after the crossing of `w_max^{N−1}/bound − 1`.
    pub worst_excess: f64,
    /// `worst_excess ≤ 0.5` (vacuously true before the crossing).
    pub upper_ok: bool,
}

/// Checks the §-negative-case barriers on a finished trace: a positive
/// lower bound on w over the whole run, and — after the first time r(t)
/// dips below zero — an upper barrier on `w_max^{N−1}` within slack 0.5.
pub fn negative_case_barriers(trace: &FlowTrace, bg: &Background) -> NegativeBarriers {
    let e = Exponents::for_background(bg);
    let min_w = trace.rows.iter().fold(f64::INFINITY, |a, r| a.min(r.min_w));
    let crossing = trace.rows.iter().position(|r| r.r < 0.0);
    match crossing {
        None => NegativeBarriers {
            crossing_reached: false,
            t_cross: f64::NAN,
            min_w,
            bound: f64::NAN,
            worst_excess: 0.0,
            upper_ok: true,
        },
        Some(k0) => {
            let row0 = &trace.rows[k0];
            let max_rbg = bg.r_bg.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let bound = powx(row0.max_w, e.p_metric).max(max_rbg / row0.r.abs());
            let mut worst = 0.0f64;
            for row in &trace.rows[k0..] {
                worst = worst.max(powx(row.max_w, e.p_metric) / bound - 1.0);
            }
            NegativeBarriers {
                crossing_reached: true,
                t_cross: row0.t,
                min_w,
                bound,
                worst_excess: worst,
                upper_ok: worst <= 0.5,
            }
        }
    }
}

/// Projects a positive field onto the discrete Neumann condition: boundary
/// values are re-solved from the one-sided second-order stencil
/// (`w_b = (4w_{in1} − w_{in2})/3`), zeroing the discrete normal derivative
/// exactly. 2-d grids run an x-edge pass, a y-edge pass, then a corner pass
/// solving each corner against the *averaged* two-sided stencil (the value
/// [`Background::normal_derivative`] reports there). Interior nodes are
/// never touched. Errors if the extrapolated boundary values lose
/// positivity — rescale or smooth the field first.
pub fn project_neumann(bg: &Background, w: &[f64]) -> Result<Field> {
    let n = bg.node_count();
    check_len("w", w, n)?;
    check_w(w)?;
    let mut out = w.to_vec();
    if bg.grid.is_1d() {
        let last = n - 1;
        for &b in &bg.boundary_nodes {
            if b == 0 {
                out[0] = (4.0 * out[1] - out[2]) / 3.0;
            } else if b == last {
                out[last] = (4.0 * out[last - 1] - out[last - 2]) / 3.0;
            }
        }
    } else {
        let [nx, ny] = bg.grid.shape;
        let [hx, hy] = bg.grid.spacing;
        for iy in 0..ny {
            out[iy * nx] = (4.0 * out[iy * nx + 1] - out[iy * nx + 2]) / 3.0;
            out[iy * nx + nx - 1] =
                (4.0 * out[iy * nx + nx - 2] - out[iy * nx + nx - 3]) / 3.0;
        }
        for ix in 0..nx {
            out[ix] = (4.0 * out[nx + ix] - out[2 * nx + ix]) / 3.0;
            out[(ny - 1) * nx + ix] =
                (4.0 * out[(ny - 2) * nx + ix] - out[(ny - 3) * nx + ix]) / 3.0;
        }
        // Corner pass: one dof per corner cannot zero both one-sided
        // stencils, so zero their average instead.
        let a = 1.5 / hx + 1.5 / hy;
        for (c, x1, x2, y1, y2) in [
            (0, 1, 2, nx, 2 * nx),
            (nx - 1, nx - 2, nx - 3, 2 * nx - 1, 3 * nx - 1),
            ((ny - 1) * nx, (ny - 1) * nx + 1, (ny - 1) * nx + 2, (ny - 2) * nx, (ny - 3) * nx),
            (ny * nx - 1, ny * nx - 2, ny * nx - 3, (ny - 1) * nx - 1, (ny - 2) * nx - 1),
        ] {
            let b = (4.0 * out[x1] - out[x2]) / (2.0 * hx)
                + (4.0 * out[y1] - out[y2]) / (2.0 * hy);
            out[c] = b / a;
        }
    }
    check_w(&out)?;
    Ok(out)
}

/// Runs the flow from `w0` (positivity and an approximate discrete Neumann
/// condition are preconditions; the volume is normalized on entry). Appends
/// a trace row every `monitor_stride` steps plus the initial and final
/// states, and accumulates full-resolution extrema. Non-convergence within
/// `max_steps` is reported, not an error.
pub fn run(bg: &Background, w0: &[f64], config: &FlowConfig) -> Result<(FlowResult, FlowTrace)> {
    let n = bg.node_count();
    check_len("w0", w0, n)?;
    check_w(w0)?;
    let (dt, p) = config.resolve(bg)?;
    let e = Exponents::for_background(bg);

    // Neumann pre-check (the initial-data builder projects exactly; this
    // guard rejects grossly incompatible fields, not discretization error).
    let w0_inf = w0.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let nd = bg.normal_derivative(w0)?;
    for (&b, &d) in bg.boundary_nodes.iter().zip(nd.iter()) {
        if d.abs() > TOL_NEUMANN_PRE * w0_inf {
            return Err(Error::InvalidParameter {
                what: "w0",
                details: alloc::format!(
                    "initial data violates the discrete Neumann condition at node {b} \
                     (∂w/∂ν = {d:e}); project it first"
                ),
            });
        }
    }

    let case = spectral::classify_sign(bg)?.case;

    let mut ws = Workspace::new(n);
    let mut cur = Cursor {
        w: normalize_volume(bg, w0)?,
        wp: vec![0.0; n],
        rf: vec![0.0; n],
        r: 0.0,
        vol: 0.0,
        gap: 0.0,
        min_r: 0.0,
        max_r: 0.0,
        min_w: 0.0,
        max_w: 0.0,
        t: 0.0,
    };
    refresh(bg, &e, &mut ws, &mut cur);

    let sigma = match config.sigma {
        Some(s) => s,
        None => (1.0 - cur.min_r).max(1.0),
    };
    let min_r0 = cur.min_r;
    let mp_floor = min_r0.min(0.0);

    // Static members of the Rayleigh trial family.
    let ones = vec![1.0; n];
    let e_const = energy(bg, &ones)?;
    let e_psi = {
        let op = spectral::assemble_linearized(bg, &ones)?;
        let sp = spectral::eigensolve(&op, 1)?;
        let psi = &sp.pairs[0].psi;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in psi.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            let shifted: Field = psi.iter().map(|&v| v - lo + 0.1 * (hi - lo)).collect();
            energy(bg, &shifted)?
        } else {
            e_const
        }
    };
    let y_static = e_const.min(e_psi);

    let mut extrema = RunExtrema {
        max_r_increase: 0.0,
        min_r_margin: cur.min_r - mp_floor,
        max_step_volume_drift: 0.0,
        max_volume_deviation: (cur.vol - 1.0).abs(),
        min_w: cur.min_w,
        max_w: cur.max_w,
        max_lambda_p_increase: 0.0,
        min_rayleigh_margin: f64::INFINITY,
    };

    let harnack0 = (powx(cur.min_w, e.p_crit), powx(cur.max_w, e.p_crit));
    let mut trace = FlowTrace {
        rows: Vec::new(),
        sigma,
        p_lyapunov: p,
        tol_conv: config.tol_conv,
    };
    let mut prev_row: Option<(Vec<f64>, f64)> = None; // (w at last row, t)
    let mut prev_lambda_p: Option<f64> = None;

    // Appends a row for the cursor state; tracks row-cadence extrema.
    macro_rules! push_row {
        () => {{
            let e_row = energy(bg, &cur.w)?;
            let lambda_p = lambda_p_of(bg, &e, &cur.rf, &cur.w, sigma, p)?;
            let dphi_dt_min = match &prev_row {
                None => 0.0,
                Some((wprev, tprev)) => {
                    let dtr = cur.t - tprev;
                    let mut m = f64::INFINITY;
                    for i in 0..n {
                        m = m.min(-e.c_phi * (cur.w[i].ln() - wprev[i].ln()) / dtr);
                    }
                    m
                }
            };
            let row = TraceRow {
                t: cur.t,
                r: cur.r,
                volume_raw: cur.vol,
                min_r: cur.min_r,
                max_r: cur.max_r,
                min_w: cur.min_w,
                max_w: cur.max_w,
                sup_gap: cur.gap,
                energy: e_row,
                lambda_p,
                harnack_min: powx(cur.min_w, e.p_crit) / harnack0.0,
                harnack_max: powx(cur.max_w, e.p_crit) / harnack0.1,
                dphi_dt_min,
            };
            for (ci, v) in row.values().into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { what: "trace row", index: ci });
                }
            }
            if let Some(lp) = prev_lambda_p {
                extrema.max_lambda_p_increase =
                    extrema.max_lambda_p_increase.max((lambda_p - lp) / (1.0 + lp.abs()));
            }
            prev_lambda_p = Some(lambda_p);
            let y_row = y_static.min(e_row);
            extrema.min_rayleigh_margin =
                extrema.min_rayleigh_margin.min(e.c_r * cur.r - y_row);
            prev_row = Some((cur.w.clone(), cur.t));
            trace.rows.push(row);
        }};
    }

    push_row!();

    let mut steps: u64 = 0;
    let mut converged = false;
    loop {
        // Convergence check on the current state.
        if cur.gap < config.tol_conv * (1.0 + cur.r.abs())
            && residual_of(&e, &cur) <= TOL_RESIDUAL
        {
            converged = true;
            break;
        }
        if steps >= config.max_steps {
            break;
        }

        let r_prev = cur.r;
        let vol_prev = cur.vol;
        let min_new = advance_w(bg, &e, &mut ws, &cur, dt, config.stepper)?;
        if !(min_new > W_FLOOR) {
            return Err(Error::BlowDown { step: steps + 1, min_w: min_new });
        }
        let vol_raw = pairwise_map_sum(n, |i| powx(ws.wnew[i], e.p_vol) * bg.quad[i]);
        extrema.max_step_volume_drift =
            extrema.max_step_volume_drift.max((vol_raw - vol_prev).abs());
        if config.renormalize_each_step {
            let s = powx(vol_raw, -1.0 / e.p_vol);
            for i in 0..n {
                cur.w[i] = s * ws.wnew[i];
            }
        } else {
            cur.w.copy_from_slice(&ws.wnew);
        }
        refresh(bg, &e, &mut ws, &mut cur);
        steps += 1;
        cur.t = steps as f64 * dt;

        extrema.max_r_increase =
            extrema.max_r_increase.max((cur.r - r_prev) / (1.0 + r_prev.abs()));
        extrema.min_r_margin = extrema.min_r_margin.min(cur.min_r - mp_floor);
        if config.renormalize_each_step {
            extrema.max_volume_deviation =
                extrema.max_volume_deviation.max((cur.vol - 1.0).abs());
        }
        extrema.min_w = extrema.min_w.min(cur.min_w);
        extrema.max_w = extrema.max_w.max(cur.max_w);

        if !cur.r.is_finite() || !cur.vol.is_finite() {
            return Err(Error::NonFinite { what: "flow state", index: steps as usize });
        }

        if steps.is_multiple_of(config.monitor_stride) {
            push_row!();
        }
    }

    let final_residual = residual_of(&e, &cur);

    if trace.rows.last().map(|row| row.t) != Some(cur.t) {
        push_row!();
    }
    // The row-cadence carries (written by every push_row! expansion) end
    // their life here.
    let _ = (prev_row, prev_lambda_p);

    let result = FlowResult {
        w_final: cur.w,
        converged,
        steps_taken: steps,
        r_inf_estimate: cur.r,
        steady_residual: final_residual,
        case,
        extrema,
    };
    Ok((result, trace))
}
