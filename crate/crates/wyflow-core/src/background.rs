//! Discretized smooth metric measure spaces with boundary.
//!
//! A background bundles a reduced uniform grid, the closed-form metric data
//! of one of four catalog families, a weight `φ₀`, the parameters `(n, m)`,
//! quadrature for `e^{-φ₀} dV` and `e^{-φ₀} dA`, and cached background
//! curvatures `R^m_{φ₀}` (interior) and `H^m_{φ₀}` (boundary).
//!
//! Families (coordinates after symmetric reduction):
//!
//! | id               | domain              | ω(x)         | R_g       | H_g at boundary   |
//! |------------------|---------------------|--------------|-----------|-------------------|
//! | `flat_interval`  | x ∈ [0, L]          | 1            | 0         | 0                 |
//! | `flat_rectangle` | (x, y) ∈ [0,Lx]×[0,Ly] | 1         | 0         | 0                 |
//! | `spherical_cap`  | θ ∈ [0, θ₀], θ₀ < π | sin^{n-1} θ  | n(n-1)    | (n-1)·cot θ₀      |
//! | `hyperbolic_ball`| ρ ∈ [0, ρ₀]         | sinh^{n-1} ρ | -n(n-1)   | (n-1)·coth ρ₀     |
//!
//! The `φ₀` families are trigonometric perturbations plus (on curved
//! families) the quadratic term `q·x²` with `q` chosen so that
//! `∂φ₀/∂ν = -H_g` at the true boundary; every catalog background therefore
//! satisfies the flow's compatibility condition `H^m_{φ₀} = 0` exactly.
//!
//! The weighted Laplacian is discretized in conservative flux form with face
//! densities `ω·e^{-φ₀}` evaluated from the closed forms at cell-face
//! midpoints and zero outside flux at true-boundary nodes (the ghost/even
//! reflection reading of the Neumann condition). This is a second-order
//! central scheme for `u″ + (ω′/ω - φ₀′)u′`, and it is *exactly*
//! self-adjoint and negative semidefinite with respect to the trapezoid
//! quadrature weights, because operator and quadrature share one set of cell
//! masses. At a symmetry axis the cell mass is the true integral
//! `∫₀^{h/2} ω e^{-φ₀}` (Gauss), which reproduces the removable-singularity
//! limit `Δu(0) = n·u″(0)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, Error, Result};
use crate::grid::{GridKind, GridSpec, NodeRole};
use crate::numeric::{gauss_integrate, pairwise_map_sum, powx, unit_sphere_area};
#[cfg_attr(test, allow(unused_imports))] // shadowed by std's inherent methods in test builds
use crate::numeric::FloatExt;
use crate::Field;

/// Boundary-compatibility tolerance for `|H^m_{φ₀}|`. The catalog cancels
/// `H_g` analytically, so this only absorbs roundoff.
pub const TOL_BC: f64 = 1e-10;

/// Catalog family with its extent parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    FlatInterval { length: f64 },
    FlatRectangle { lx: f64, ly: f64 },
    SphericalCap { theta0: f64 },
    HyperbolicBall { rho0: f64 },
}

impl Family {
    /// Stable string id used by configs and file formats.
    pub fn id(&self) -> &'static str {
        match self {
            Family::FlatInterval { .. } => "flat_interval",
            Family::FlatRectangle { .. } => "flat_rectangle",
            Family::SphericalCap { .. } => "spherical_cap",
            Family::HyperbolicBall { .. } => "hyperbolic_ball",
        }
    }
}

/// Closed-form weight family: `φ₀ = offset + A·cos(jπx/X)·[cos(jπy/Y)] + q·x²`,
/// with the quadratic term only on curved families (see module docs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phi0Spec {
    pub amplitude: f64,
    /// Integer frequency `j` of the cosine factor(s).
    pub mode: u32,
    pub offset: f64,
}

impl Phi0Spec {
    pub const ZERO: Phi0Spec = Phi0Spec { amplitude: 0.0, mode: 1, offset: 0.0 };
}

/// Everything needed to build a [`Background`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundSpec {
    pub family: Family,
    /// Ambient dimension, ≥ 3.
    pub n: u32,
    /// Measure dimension parameter, ≥ 0 (m = 0 forces φ₀ ≡ 0).
    pub m: f64,
    /// Nodes along the (first) axis, ≥ 16.
    pub nodes: usize,
    /// Nodes along the second axis (rectangle only).
    pub nodes_y: usize,
    pub phi0: Phi0Spec,
}

impl BackgroundSpec {
    /// Extent of the first axis.
    pub fn xmax(&self) -> f64 {
        match self.family {
            Family::FlatInterval { length } => length,
            Family::FlatRectangle { lx, .. } => lx,
            Family::SphericalCap { theta0 } => theta0,
            Family::HyperbolicBall { rho0 } => rho0,
        }
    }

    /// Coefficient of the quadratic term in φ₀ cancelling `H_g` at the
    /// boundary; zero on flat families. Values below roundoff scale are
    /// snapped to zero (e.g. a cap with θ₀ = π/2).
    pub fn phi0_q(&self) -> f64 {
        let q = match self.family {
            Family::SphericalCap { theta0 } => {
                -((self.n - 1) as f64) * (theta0.cos() / theta0.sin()) / (2.0 * theta0)
            }
            Family::HyperbolicBall { rho0 } => {
                -((self.n - 1) as f64) * (rho0.cosh() / rho0.sinh()) / (2.0 * rho0)
            }
            _ => 0.0,
        };
        if self.m == 0.0 || q.abs() < 1e-14 {
            0.0
        } else {
            q
        }
    }

    /// Closed-form φ₀ at a point (y ignored on 1-d families).
    pub fn phi0_value(&self, x: f64, y: f64) -> f64 {
        let p = &self.phi0;
        let j = p.mode as f64;
        match self.family {
            Family::FlatInterval { length } => {
                p.offset + p.amplitude * (j * core::f64::consts::PI * x / length).cos()
            }
            Family::FlatRectangle { lx, ly } => {
                p.offset
                    + p.amplitude
                        * (j * core::f64::consts::PI * x / lx).cos()
                        * (j * core::f64::consts::PI * y / ly).cos()
            }
            Family::SphericalCap { theta0 } => {
                p.offset
                    + p.amplitude * (j * core::f64::consts::PI * x / theta0).cos()
                    + self.phi0_q() * x * x
            }
            Family::HyperbolicBall { rho0 } => {
                p.offset
                    + p.amplitude * (j * core::f64::consts::PI * x / rho0).cos()
                    + self.phi0_q() * x * x
            }
        }
    }

    /// Closed-form ∂φ₀/∂x.
    pub fn phi0_deriv_x(&self, x: f64, y: f64) -> f64 {
        let p = &self.phi0;
        let jk = p.mode as f64 * core::f64::consts::PI / self.xmax();
        match self.family {
            Family::FlatInterval { .. } => -p.amplitude * jk * (jk * x).sin(),
            Family::FlatRectangle { ly, .. } => {
                -p.amplitude
                    * jk
                    * (jk * x).sin()
                    * (p.mode as f64 * core::f64::consts::PI * y / ly).cos()
            }
            Family::SphericalCap { .. } | Family::HyperbolicBall { .. } => {
                -p.amplitude * jk * (jk * x).sin() + 2.0 * self.phi0_q() * x
            }
        }
    }

    /// Closed-form ∂φ₀/∂y (rectangle only; zero otherwise).
    pub fn phi0_deriv_y(&self, x: f64, y: f64) -> f64 {
        match self.family {
            Family::FlatRectangle { lx, ly } => {
                let p = &self.phi0;
                let jx = p.mode as f64 * core::f64::consts::PI / lx;
                let jy = p.mode as f64 * core::f64::consts::PI / ly;
                -p.amplitude * jy * (jx * x).cos() * (jy * y).sin()
            }
            _ => 0.0,
        }
    }

    /// Reduction weight ω at coordinate x.
    pub fn omega_value(&self, x: f64) -> f64 {
        match self.family {
            Family::FlatInterval { .. } | Family::FlatRectangle { .. } => 1.0,
            Family::SphericalCap { .. } => powx(x.sin(), (self.n - 1) as f64),
            Family::HyperbolicBall { .. } => powx(x.sinh(), (self.n - 1) as f64),
        }
    }

    /// Scalar curvature of the background metric (constant on the catalog).
    pub fn r_g(&self) -> f64 {
        let nn = (self.n * (self.n - 1)) as f64;
        match self.family {
            Family::FlatInterval { .. } | Family::FlatRectangle { .. } => 0.0,
            Family::SphericalCap { .. } => nn,
            Family::HyperbolicBall { .. } => -nn,
        }
    }

    /// Mean curvature of the background boundary (same at every component).
    pub fn h_g(&self) -> f64 {
        match self.family {
            Family::FlatInterval { .. } | Family::FlatRectangle { .. } => 0.0,
            Family::SphericalCap { theta0 } => {
                (self.n - 1) as f64 * theta0.cos() / theta0.sin()
            }
            Family::HyperbolicBall { rho0 } => {
                (self.n - 1) as f64 * rho0.cosh() / rho0.sinh()
            }
        }
    }

    /// Transverse area factor from the symmetric reduction (area of the unit
    /// (n-1)-sphere for radial families, 1 for flat ones).
    pub fn transverse_area(&self) -> f64 {
        match self.family {
            Family::FlatInterval { .. } | Family::FlatRectangle { .. } => 1.0,
            _ => unit_sphere_area(self.n - 1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidParameter {
                what: "n",
                details: format!("ambient dimension must be ≥ 3, got {}", self.n),
            });
        }
        if !self.m.is_finite() || self.m < 0.0 {
            return Err(Error::InvalidParameter {
                what: "m",
                details: format!("measure dimension must be finite and ≥ 0, got {}", self.m),
            });
        }
        if self.nodes < 16 {
            return Err(Error::InvalidParameter {
                what: "nodes",
                details: format!("need at least 16 nodes per axis, got {}", self.nodes),
            });
        }
        if matches!(self.family, Family::FlatRectangle { .. }) && self.nodes_y < 16 {
            return Err(Error::InvalidParameter {
                what: "nodes_y",
                details: format!("need at least 16 nodes per axis, got {}", self.nodes_y),
            });
        }
        let ok_extent = match self.family {
            Family::FlatInterval { length } => length > 0.0 && length.is_finite(),
            Family::FlatRectangle { lx, ly } => {
                lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()
            }
            Family::SphericalCap { theta0 } => theta0 > 0.0 && theta0 < core::f64::consts::PI,
            Family::HyperbolicBall { rho0 } => rho0 > 0.0 && rho0.is_finite(),
        };
        if !ok_extent {
            return Err(Error::InvalidParameter {
                what: "extent",
                details: format!("invalid domain extent for family {}", self.family.id()),
            });
        }
        if !self.phi0.amplitude.is_finite() || !self.phi0.offset.is_finite() {
            return Err(Error::InvalidParameter {
                what: "phi0",
                details: format!(
                    "amplitude/offset must be finite, got {} / {}",
                    self.phi0.amplitude, self.phi0.offset
                ),
            });
        }
        if self.m == 0.0
            && (self.phi0.amplitude != 0.0 || self.phi0.offset != 0.0 || self.phi0_q() != 0.0)
        {
            return Err(Error::InvalidParameter {
                what: "m",
                details: format!(
                    "m = 0 requires φ₀ ≡ 0 (family {} with these parameters has φ₀ ≢ 0)",
                    self.family.id()
                ),
            });
        }
        Ok(())
    }
}

/// Built background: grid, weight field, quadrature and cached curvatures.
#[derive(Debug, Clone)]
pub struct Background {
    pub spec: BackgroundSpec,
    pub grid: GridSpec,
    /// φ₀ sampled at nodes.
    pub phi0: Field,
    /// Cached weighted scalar curvature `R^m_{φ₀}` of the background.
    pub r_bg: Field,
    /// Cached weighted mean curvature `H^m_{φ₀}` per true-boundary node
    /// (≤ [`TOL_BC`] in magnitude by construction).
    pub h_bg: Vec<f64>,
    /// Indices of true-boundary nodes, ascending.
    pub boundary_nodes: Vec<usize>,
    /// Interior quadrature weights μ realizing `∫ · e^{-φ₀} dV` (includes the
    /// transverse area factor).
    pub quad: Vec<f64>,
    /// Boundary quadrature weights aligned with `boundary_nodes`, realizing
    /// `∮ · e^{-φ₀} dA`.
    pub bquad: Vec<f64>,
    /// Cell masses of the flux discretization: `quad = transverse_area * mass`.
    pub(crate) mass: Vec<f64>,
    /// Face densities ω·e^{-φ₀} at x-face midpoints (1-d: n-1 entries; 2-d:
    /// (nx-1)·ny entries of full flux coefficients, see `weighted_laplacian`).
    pub(crate) face_x: Vec<f64>,
    /// y-face flux coefficients (2-d only).
    pub(crate) face_y: Vec<f64>,
}

/// Builds a catalog background, populating all caches and checking the
/// boundary compatibility `|H^m_{φ₀}| ≤` [`TOL_BC`].
pub fn build_background(spec: &BackgroundSpec) -> Result<Background> {
    spec.validate()?;
    match spec.family {
        Family::FlatRectangle { .. } => build_2d(spec),
        _ => build_1d(spec),
    }
}

fn build_1d(spec: &BackgroundSpec) -> Result<Background> {
    let n1 = spec.nodes;
    let xmax = spec.xmax();
    let h = xmax / (n1 - 1) as f64;
    let has_axis = !matches!(spec.family, Family::FlatInterval { .. });

    let xs: Vec<f64> = (0..n1).map(|i| i as f64 * h).collect();
    let omega: Vec<f64> = xs.iter().map(|&x| spec.omega_value(x)).collect();
    let phi0: Vec<f64> = xs.iter().map(|&x| spec.phi0_value(x, 0.0)).collect();

    let mut roles = vec![NodeRole::Interior; n1];
    roles[0] = if has_axis { NodeRole::Axis } else { NodeRole::Boundary };
    roles[n1 - 1] = NodeRole::Boundary;
    let boundary_nodes: Vec<usize> =
        (0..n1).filter(|&i| roles[i] == NodeRole::Boundary).collect();

    let grid = GridSpec {
        kind: GridKind::Weighted1d,
        shape: [n1, 1],
        extents: [[0.0, xmax], [0.0, 0.0]],
        spacing: [h, 0.0],
        omega: omega.clone(),
        roles,
    };

    // Weighted face densities and cell masses (density ω e^{-φ₀}).
    let rho = |x: f64| spec.omega_value(x) * (-spec.phi0_value(x, 0.0)).exp();
    let face_x: Vec<f64> = (0..n1 - 1).map(|i| rho(xs[i] + 0.5 * h)).collect();
    let mut mass = vec![0.0; n1];
    for i in 0..n1 {
        let c = if i == 0 || i == n1 - 1 { 0.5 } else { 1.0 };
        mass[i] = c * h * omega[i] * (-phi0[i]).exp();
    }
    if has_axis {
        mass[0] = gauss_integrate(0.0, 0.5 * h, rho);
    }

    let aperp = spec.transverse_area();
    let quad: Vec<f64> = mass.iter().map(|&m| aperp * m).collect();
    let bquad: Vec<f64> = boundary_nodes
        .iter()
        .map(|&i| aperp * omega[i] * (-phi0[i]).exp())
        .collect();

    // H^m_{φ₀} = H_g + ∂φ₀/∂ν with the analytic normal derivative (the
    // catalog cancels H_g by construction; see module docs).
    let mut h_bg = Vec::with_capacity(boundary_nodes.len());
    for &i in &boundary_nodes {
        let nu_dphi =
            if i == 0 { -spec.phi0_deriv_x(0.0, 0.0) } else { spec.phi0_deriv_x(xs[i], 0.0) };
        h_bg.push(spec.h_g() + nu_dphi);
    }
    for &v in &h_bg {
        if v.abs() > TOL_BC {
            return Err(Error::IncompatibleBoundary { value: v.abs(), tol: TOL_BC });
        }
    }

    // R^m_{φ₀} = R_g + 2 Δ_g φ₀ − ((m+1)/m)|∇φ₀|², with Δ_g the metric flux
    // Laplacian (density ω, analytic boundary fluxes ω·φ₀′ at true-boundary
    // faces) and a discrete derivative for |∇φ₀|².
    let r_bg = if spec.m == 0.0 {
        vec![spec.r_g(); n1]
    } else {
        let mfaces: Vec<f64> = (0..n1 - 1).map(|i| spec.omega_value(xs[i] + 0.5 * h)).collect();
        let mut mmass = vec![0.0; n1];
        for i in 0..n1 {
            let c = if i == 0 || i == n1 - 1 { 0.5 } else { 1.0 };
            mmass[i] = c * h * omega[i];
        }
        if has_axis {
            mmass[0] = gauss_integrate(0.0, 0.5 * h, |x| spec.omega_value(x));
        }
        let mut lap = vec![0.0; n1];
        for i in 0..n1 {
            let fr = if i + 1 < n1 {
                mfaces[i] * (phi0[i + 1] - phi0[i]) / h
            } else {
                omega[n1 - 1] * spec.phi0_deriv_x(xs[n1 - 1], 0.0)
            };
            let fl = if i > 0 {
                mfaces[i - 1] * (phi0[i] - phi0[i - 1]) / h
            } else if has_axis {
                0.0
            } else {
                omega[0] * spec.phi0_deriv_x(0.0, 0.0)
            };
            lap[i] = (fr - fl) / mmass[i];
        }
        let ratio = (spec.m + 1.0) / spec.m;
        let mut out = vec![0.0; n1];
        for i in 0..n1 {
            let d = deriv_1d(&phi0, i, n1, h, has_axis);
            out[i] = spec.r_g() + 2.0 * lap[i] - ratio * d * d;
        }
        out
    };

    Ok(Background {
        spec: *spec,
        grid,
        phi0,
        r_bg,
        h_bg,
        boundary_nodes,
        quad,
        bquad,
        mass,
        face_x,
        face_y: Vec::new(),
    })
}

/// Discrete d/dx at node i: central in the interior, one-sided 3-point at
/// true boundaries, zero at a symmetry axis (even data).
fn deriv_1d(u: &[f64], i: usize, n1: usize, h: f64, has_axis: bool) -> f64 {
    if i == 0 {
        if has_axis {
            0.0
        } else {
            (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
        }
    } else if i == n1 - 1 {
        (3.0 * u[n1 - 1] - 4.0 * u[n1 - 2] + u[n1 - 3]) / (2.0 * h)
    } else {
        (u[i + 1] - u[i - 1]) / (2.0 * h)
    }
}

fn build_2d(spec: &BackgroundSpec) -> Result<Background> {
    let (lx, ly) = match spec.family {
        Family::FlatRectangle { lx, ly } => (lx, ly),
        _ => unreachable!(),
    };
    let (nx, ny) = (spec.nodes, spec.nodes_y);
    let hx = lx / (nx - 1) as f64;
    let hy = ly / (ny - 1) as f64;
    let nn = nx * ny;
    let cx = |ix: usize| if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 };
    let cy = |iy: usize| if iy == 0 || iy == ny - 1 { 0.5 } else { 1.0 };

    let mut phi0 = vec![0.0; nn];
    let mut roles = vec![NodeRole::Interior; nn];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            phi0[i] = spec.phi0_value(ix as f64 * hx, iy as f64 * hy);
            if ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1 {
                roles[i] = NodeRole::Boundary;
            }
        }
    }
    let boundary_nodes: Vec<usize> =
        (0..nn).filter(|&i| roles[i] == NodeRole::Boundary).collect();

    let grid = GridSpec {
        kind: GridKind::FlatRectangle,
        shape: [nx, ny],
        extents: [[0.0, lx], [0.0, ly]],
        spacing: [hx, hy],
        omega: vec![1.0; nn],
        roles,
    };

    let rho = |x: f64, y: f64| (-spec.phi0_value(x, y)).exp();
    let mut mass = vec![0.0; nn];
    for iy in 0..ny {
        for ix in 0..nx {
            mass[iy * nx + ix] = cx(ix) * cy(iy) * hx * hy * (-phi0[iy * nx + ix]).exp();
        }
    }
    // Full flux coefficients: face density times transverse cell width over
    // spacing, so the Laplacian is (Σ ± face·Δu) / mass.
    let mut face_x = vec![0.0; (nx - 1) * ny];
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            face_x[iy * (nx - 1) + ix] =
                rho((ix as f64 + 0.5) * hx, iy as f64 * hy) * cy(iy) * hy / hx;
        }
    }
    let mut face_y = vec![0.0; nx * (ny - 1)];
    for iy in 0..ny - 1 {
        for ix in 0..nx {
            face_y[iy * nx + ix] =
                rho(ix as f64 * hx, (iy as f64 + 0.5) * hy) * cx(ix) * hx / hy;
        }
    }

    let quad = mass.clone(); // transverse area factor is 1

    // Boundary quadrature: 1-d trapezoid along each edge, accumulated so
    // corners collect both incident edges.
    let mut bq_full = vec![0.0; nn];
    for ix in 0..nx {
        let wt = cx(ix) * hx;
        bq_full[ix] += wt * (-phi0[ix]).exp();
        bq_full[(ny - 1) * nx + ix] += wt * (-phi0[(ny - 1) * nx + ix]).exp();
    }
    for iy in 0..ny {
        let wt = cy(iy) * hy;
        bq_full[iy * nx] += wt * (-phi0[iy * nx]).exp();
        bq_full[iy * nx + nx - 1] += wt * (-phi0[iy * nx + nx - 1]).exp();
    }
    let bquad: Vec<f64> = boundary_nodes.iter().map(|&i| bq_full[i]).collect();

    // H^m_{φ₀}: H_g = 0 and the analytic normal derivative of φ₀ vanishes on
    // every edge by construction; corners get the average of their edges.
    let mut h_bg = Vec::with_capacity(boundary_nodes.len());
    for &i in &boundary_nodes {
        let (ix, iy) = (i % nx, i / nx);
        let (x, y) = (ix as f64 * hx, iy as f64 * hy);
        let mut acc = 0.0;
        let mut sides = 0u32;
        if ix == 0 {
            acc += -spec.phi0_deriv_x(x, y);
            sides += 1;
        }
        if ix == nx - 1 {
            acc += spec.phi0_deriv_x(x, y);
            sides += 1;
        }
        if iy == 0 {
            acc += -spec.phi0_deriv_y(x, y);
            sides += 1;
        }
        if iy == ny - 1 {
            acc += spec.phi0_deriv_y(x, y);
            sides += 1;
        }
        h_bg.push(spec.h_g() + acc / sides as f64);
    }
    for &v in &h_bg {
        if v.abs() > TOL_BC {
            return Err(Error::IncompatibleBoundary { value: v.abs(), tol: TOL_BC });
        }
    }

    // R^m_{φ₀} on the flat rectangle: R_g = 0, metric Laplacian is the plain
    // 5-point flux form (zero normal derivative of φ₀ on all edges), plus the
    // discrete |∇φ₀|².
    let r_bg = if spec.m == 0.0 {
        vec![0.0; nn]
    } else {
        let ratio = (spec.m + 1.0) / spec.m;
        let mut out = vec![0.0; nn];
        for iy in 0..ny {
            for ix in 0..nx {
                let i = iy * nx + ix;
                let mut flux = 0.0;
                if ix + 1 < nx {
                    flux += cy(iy) * hy / hx * (phi0[i + 1] - phi0[i]);
                }
                if ix > 0 {
                    flux -= cy(iy) * hy / hx * (phi0[i] - phi0[i - 1]);
                }
                if iy + 1 < ny {
                    flux += cx(ix) * hx / hy * (phi0[i + nx] - phi0[i]);
                }
                if iy > 0 {
                    flux -= cx(ix) * hx / hy * (phi0[i] - phi0[i - nx]);
                }
                let lap = flux / (cx(ix) * cy(iy) * hx * hy);
                let dx = deriv_axis_2d(&phi0, nx, ny, ix, iy, hx, true);
                let dy = deriv_axis_2d(&phi0, nx, ny, ix, iy, hy, false);
                out[i] = 2.0 * lap - ratio * (dx * dx + dy * dy);
            }
        }
        out
    };

    Ok(Background {
        spec: *spec,
        grid,
        phi0,
        r_bg,
        h_bg,
        boundary_nodes,
        quad,
        bquad,
        mass,
        face_x,
        face_y,
    })
}

/// Discrete partial derivative along one axis of a 2-d field (central
/// interior, one-sided 3-point at edges).
fn deriv_axis_2d(
    u: &[f64],
    nx: usize,
    ny: usize,
    ix: usize,
    iy: usize,
    h: f64,
    x_axis: bool,
) -> f64 {
    let (pos, len, stride) =
        if x_axis { (ix, nx, 1usize) } else { (iy, ny, nx) };
    let i = iy * nx + ix;
    if pos == 0 {
        (-3.0 * u[i] + 4.0 * u[i + stride] - u[i + 2 * stride]) / (2.0 * h)
    } else if pos == len - 1 {
        (3.0 * u[i] - 4.0 * u[i - stride] + u[i - 2 * stride]) / (2.0 * h)
    } else {
        (u[i + stride] - u[i - stride]) / (2.0 * h)
    }
}

impl Background {
    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    /// Smallest positive grid spacing (parabolic dt policies scale with h²).
    pub fn spacing_min(&self) -> f64 {
        let [hx, hy] = self.grid.spacing;
        if hy > 0.0 && hy < hx {
            hy
        } else {
            hx
        }
    }

    /// Discrete weighted Laplacian `Δ_{φ₀}u = Δ_{g₀}u − ⟨∇φ₀, ∇u⟩` in
    /// conservative flux form, with the Neumann condition built in as zero
    /// outside flux (ghost/even reflection) at true-boundary nodes and the
    /// regularity limit at a symmetry axis.
    pub fn weighted_laplacian(&self, u: &[f64]) -> Result<Field> {
        let nn = self.node_count();
        check_len("u", u, nn)?;
        check_finite("u", u)?;
        let mut out = vec![0.0; nn];
        self.weighted_laplacian_into(u, &mut out);
        Ok(out)
    }

    /// Allocation-free variant for the stepping loop; `u` must be validated
    /// by the caller and `out` sized to the node count.
    pub(crate) fn weighted_laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let nn = self.node_count();
        if self.grid.is_1d() {
            let n1 = nn;
            let h = self.grid.spacing[0];
            for i in 0..n1 {
                let fr = if i + 1 < n1 { self.face_x[i] * (u[i + 1] - u[i]) / h } else { 0.0 };
                let fl = if i > 0 { self.face_x[i - 1] * (u[i] - u[i - 1]) / h } else { 0.0 };
                out[i] = (fr - fl) / self.mass[i];
            }
        } else {
            let [nx, ny] = self.grid.shape;
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    let mut flux = 0.0;
                    if ix + 1 < nx {
                        flux += self.face_x[iy * (nx - 1) + ix] * (u[i + 1] - u[i]);
                    }
                    if ix > 0 {
                        flux -= self.face_x[iy * (nx - 1) + ix - 1] * (u[i] - u[i - 1]);
                    }
                    if iy + 1 < ny {
                        flux += self.face_y[iy * nx + ix] * (u[i + nx] - u[i]);
                    }
                    if iy > 0 {
                        flux -= self.face_y[(iy - 1) * nx + ix] * (u[i] - u[i - nx]);
                    }
                    out[i] = flux / self.mass[i];
                }
            }
        }
    }

    /// One-sided second-order outward normal derivative at true-boundary
    /// nodes, in the order of `boundary_nodes`. At rectangle corners the two
    /// edge values are averaged.
    pub fn normal_derivative(&self, u: &[f64]) -> Result<Vec<f64>> {
        let nn = self.node_count();
        check_len("u", u, nn)?;
        check_finite("u", u)?;
        let mut out = Vec::with_capacity(self.boundary_nodes.len());
        if self.grid.is_1d() {
            let h = self.grid.spacing[0];
            for &i in &self.boundary_nodes {
                let v = if i == 0 {
                    (3.0 * u[0] - 4.0 * u[1] + u[2]) / (2.0 * h)
                } else {
                    (3.0 * u[nn - 1] - 4.0 * u[nn - 2] + u[nn - 3]) / (2.0 * h)
                };
                out.push(v);
            }
        } else {
            let [nx, ny] = self.grid.shape;
            let [hx, hy] = self.grid.spacing;
            for &i in &self.boundary_nodes {
                let (ix, iy) = (i % nx, i / nx);
                let mut acc = 0.0;
                let mut sides = 0u32;
                if ix == 0 {
                    acc += (3.0 * u[i] - 4.0 * u[i + 1] + u[i + 2]) / (2.0 * hx);
                    sides += 1;
                }
                if ix == nx - 1 {
                    acc += (3.0 * u[i] - 4.0 * u[i - 1] + u[i - 2]) / (2.0 * hx);
                    sides += 1;
                }
                if iy == 0 {
                    acc += (3.0 * u[i] - 4.0 * u[i + nx] + u[i + 2 * nx]) / (2.0 * hy);
                    sides += 1;
                }
                if iy == ny - 1 {
                    acc += (3.0 * u[i] - 4.0 * u[i - nx] + u[i - 2 * nx]) / (2.0 * hy);
                    sides += 1;
                }
                out.push(acc / sides as f64);
            }
        }
        Ok(out)
    }

    /// `∫ u e^{-φ₀} dV` by the background quadrature (deterministic pairwise
    /// order).
    pub fn integrate(&self, u: &[f64]) -> Result<f64> {
        check_len("u", u, self.node_count())?;
        Ok(pairwise_map_sum(u.len(), |i| u[i] * self.quad[i]))
    }

    /// μ-weighted inner product ⟨u, v⟩ = ∫ u v e^{-φ₀} dV.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_len("u", u, self.node_count())?;
        check_len("v", v, self.node_count())?;
        Ok(pairwise_map_sum(u.len(), |i| u[i] * v[i] * self.quad[i]))
    }

    /// `∮ b e^{-φ₀} dA` over true-boundary nodes; `b` is aligned with
    /// `boundary_nodes`.
    pub fn integrate_boundary(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.boundary_nodes.len() {
            return Err(Error::ShapeMismatch {
                what: "boundary values",
                expected: self.boundary_nodes.len(),
                got: b.len(),
            });
        }
        Ok(pairwise_map_sum(b.len(), |i| b[i] * self.bquad[i]))
    }
}

#[cfg(test)]
mod tests {
    // Indexed loops in assertions keep the node index available for the
    // failure message and coordinate math.
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use core::f64::consts::PI;

    fn flat(n: u32, m: f64, nodes: usize, phi0: Phi0Spec) -> Background {
        build_background(&BackgroundSpec {
            family: Family::FlatInterval { length: 1.0 },
            n,
            m,
            nodes,
            nodes_y: nodes,
            phi0,
        })
        .unwrap()
    }

    #[test]
    fn flat_zero_weight_background() {
        let bg = flat(3, 2.0, 256, Phi0Spec::ZERO);
        assert!(bg.r_bg.iter().all(|&v| v == 0.0));
        assert!(bg.h_bg.iter().all(|&v| v == 0.0));
        assert_eq!(bg.boundary_nodes, vec![0, 255]);
    }

    #[test]
    fn cap_round_background() {
        let bg = build_background(&BackgroundSpec {
            family: Family::SphericalCap { theta0: PI / 2.0 },
            n: 3,
            m: 1.0,
            nodes: 256,
            nodes_y: 1,
            phi0: Phi0Spec::ZERO,
        })
        .unwrap();
        assert!(bg.r_bg.iter().all(|&v| v == 6.0), "round cap has R = n(n-1) = 6");
        assert!(bg.h_bg.iter().all(|&v| v.abs() <= TOL_BC), "equator is minimal");
        // Equator component measure: area of the unit 2-sphere.
        let ones = vec![1.0; bg.boundary_nodes.len()];
        let a = bg.integrate_boundary(&ones).unwrap();
        assert!((a - 4.0 * PI).abs() < 1e-12, "boundary area {a} vs {}", 4.0 * PI);
    }

    #[test]
    fn weighted_background_curvature_closed_form() {
        // φ₀ = A·cos(2πx), n = 3, m = 2 on the unit flat interval:
        // R_bg = −8π²A·cos(2πx) − 6π²A²·sin²(2πx), up to the O(h²) of the
        // discrete derivatives of φ₀.
        let a = 0.5;
        let bg = flat(3, 2.0, 256, Phi0Spec { amplitude: a, mode: 2, offset: 0.0 });
        let mut worst = 0.0f64;
        for i in 0..256 {
            let x = i as f64 / 255.0;
            let exact = -8.0 * PI * PI * a * (2.0 * PI * x).cos()
                - 6.0 * PI * PI * a * a * (2.0 * PI * x).sin().powi(2);
            worst = worst.max((bg.r_bg[i] - exact).abs());
        }
        assert!(worst < 0.02, "max deviation {worst} from the closed form");
        // Refinement: the deviation is O(h²) — quarter it at double resolution.
        let bg2 = flat(3, 2.0, 511, Phi0Spec { amplitude: a, mode: 2, offset: 0.0 });
        let mut worst2 = 0.0f64;
        for i in 0..511 {
            let x = i as f64 / 510.0;
            let exact = -8.0 * PI * PI * a * (2.0 * PI * x).cos()
                - 6.0 * PI * PI * a * a * (2.0 * PI * x).sin().powi(2);
            worst2 = worst2.max((bg2.r_bg[i] - exact).abs());
        }
        assert!(worst2 < 0.30 * worst, "O(h²): {worst2} !≪ {worst}");
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let bg = flat(3, 2.0, 128, Phi0Spec { amplitude: 0.3, mode: 1, offset: 0.1 });
        let lap = bg.weighted_laplacian(&vec![4.2; 128]).unwrap();
        assert!(lap.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_matches_symbolic_flat() {
        // φ₀ ≡ 0, u = cos(πx): Δu = −π² cos(πx) + O(h²).
        let n1 = 256;
        let bg = flat(3, 1.0, n1, Phi0Spec::ZERO);
        let u: Vec<f64> = (0..n1).map(|i| (PI * i as f64 / (n1 - 1) as f64).cos()).collect();
        let lap = bg.weighted_laplacian(&u).unwrap();
        for i in 0..n1 {
            let x = i as f64 / (n1 - 1) as f64;
            assert!(
                (lap[i] + PI * PI * (PI * x).cos()).abs() < 5e-3,
                "node {i}: {} vs {}",
                lap[i],
                -PI * PI * (PI * x).cos()
            );
        }
    }

    #[test]
    fn laplacian_matches_symbolic_weighted() {
        // φ₀ = cos(2πx), u = cos(πx):
        // Δ_φ u = u″ − φ₀′u′ = −π²cos(πx) − 2π²sin(2πx)sin(πx) + O(h²).
        let n1 = 512;
        let bg = flat(3, 2.0, n1, Phi0Spec { amplitude: 1.0, mode: 2, offset: 0.0 });
        let u: Vec<f64> = (0..n1).map(|i| (PI * i as f64 / (n1 - 1) as f64).cos()).collect();
        let lap = bg.weighted_laplacian(&u).unwrap();
        let mut worst = 0.0f64;
        for i in 0..n1 {
            let x = i as f64 / (n1 - 1) as f64;
            let exact = -PI * PI * (PI * x).cos()
                - 2.0 * PI * PI * (2.0 * PI * x).sin() * (PI * x).sin();
            worst = worst.max((lap[i] - exact).abs());
        }
        assert!(worst < 5e-3, "max deviation {worst}");
    }

    #[test]
    fn axis_regularity_limit() {
        // At the pole of a cap, Δu → n·u″(0); take u = cos(2θ), u″(0) = −4.
        let bg = build_background(&BackgroundSpec {
            family: Family::SphericalCap { theta0: PI / 2.0 },
            n: 3,
            m: 1.0,
            nodes: 512,
            nodes_y: 1,
            phi0: Phi0Spec::ZERO,
        })
        .unwrap();
        let n1 = 512;
        let u: Vec<f64> =
            (0..n1).map(|i| (2.0 * (PI / 2.0) * i as f64 / (n1 - 1) as f64).cos()).collect();
        let lap = bg.weighted_laplacian(&u).unwrap();
        let expected = 3.0 * (-4.0);
        assert!(
            (lap[0] - expected).abs() < 2e-3 * expected.abs(),
            "axis value {} vs {}",
            lap[0],
            expected
        );
    }

    #[test]
    fn quadrature_examples() {
        let n1 = 256;
        let bg = flat(3, 1.0, n1, Phi0Spec::ZERO);
        let ones = vec![1.0; n1];
        assert!((bg.integrate(&ones).unwrap() - 1.0).abs() < 1e-14, "exact for constants");
        let xs: Vec<f64> = (0..n1).map(|i| i as f64 / (n1 - 1) as f64).collect();
        assert!((bg.integrate(&xs).unwrap() - 0.5).abs() < 1e-13);
        let c2: Vec<f64> = xs.iter().map(|&x| (2.0 * PI * x).cos()).collect();
        assert!(bg.integrate(&c2).unwrap().abs() < 1e-13, "antisymmetric mode integrates to 0");
        let bones = vec![1.0; 2];
        assert!((bg.integrate_boundary(&bones).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normal_derivative_examples() {
        let n1 = 128;
        let bg = flat(3, 1.0, n1, Phi0Spec::ZERO);
        let c = vec![7.0; n1];
        assert!(bg.normal_derivative(&c).unwrap().iter().all(|&v| v == 0.0));
        let xs: Vec<f64> = (0..n1).map(|i| i as f64 / (n1 - 1) as f64).collect();
        let nd = bg.normal_derivative(&xs).unwrap();
        assert!((nd[0] + 1.0).abs() < 1e-12 && (nd[1] - 1.0).abs() < 1e-12, "{nd:?}");
        let cpi: Vec<f64> = xs.iter().map(|&x| (PI * x).cos()).collect();
        let nd = bg.normal_derivative(&cpi).unwrap();
        assert!(nd[0].abs() < 1e-3 && nd[1].abs() < 1e-3);
    }

    #[test]
    fn laplacian_is_symmetric_and_negative() {
        // Exact (to roundoff) self-adjointness and negative semidefiniteness
        // in the μ inner product — the flux form shares cell masses with the
        // quadrature.
        let specs = [
            BackgroundSpec {
                family: Family::FlatInterval { length: 1.0 },
                n: 3,
                m: 2.0,
                nodes: 64,
                nodes_y: 1,
                phi0: Phi0Spec { amplitude: 0.7, mode: 3, offset: -0.2 },
            },
            BackgroundSpec {
                family: Family::SphericalCap { theta0: 1.2 },
                n: 4,
                m: 1.5,
                nodes: 64,
                nodes_y: 1,
                phi0: Phi0Spec { amplitude: 0.4, mode: 2, offset: 0.0 },
            },
            BackgroundSpec {
                family: Family::HyperbolicBall { rho0: 1.0 },
                n: 3,
                m: 2.0,
                nodes: 64,
                nodes_y: 1,
                phi0: Phi0Spec { amplitude: 0.3, mode: 1, offset: 0.0 },
            },
            BackgroundSpec {
                family: Family::FlatRectangle { lx: 1.0, ly: 2.0 },
                n: 3,
                m: 1.0,
                nodes: 20,
                nodes_y: 24,
                phi0: Phi0Spec { amplitude: 0.5, mode: 2, offset: 0.1 },
            },
        ];
        // Simple deterministic pseudo-random fields.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for spec in &specs {
            let bg = build_background(spec).unwrap();
            let nn = bg.node_count();
            let u: Vec<f64> = (0..nn).map(|_| next()).collect();
            let v: Vec<f64> = (0..nn).map(|_| next()).collect();
            let lu = bg.weighted_laplacian(&u).unwrap();
            let lv = bg.weighted_laplacian(&v).unwrap();
            let a = bg.inner(&lu, &v).unwrap();
            let b = bg.inner(&u, &lv).unwrap();
            let scale: f64 = bg.inner(&u, &u).unwrap().sqrt() * bg.inner(&v, &v).unwrap().sqrt()
                / bg.spacing_min().powi(2);
            assert!(
                (a - b).abs() <= 1e-12 * scale.max(1.0),
                "{}: symmetry defect {} (scale {scale})",
                spec.family.id(),
                (a - b).abs()
            );
            let q = bg.inner(&lu, &u).unwrap();
            assert!(
                q <= 1e-12 * scale.max(1.0),
                "{}: ⟨Δu,u⟩ = {q} must be ≤ 0",
                spec.family.id()
            );
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let base = BackgroundSpec {
            family: Family::FlatInterval { length: 1.0 },
            n: 3,
            m: 1.0,
            nodes: 64,
            nodes_y: 1,
            phi0: Phi0Spec::ZERO,
        };
        assert!(build_background(&BackgroundSpec { n: 2, ..base }).is_err());
        assert!(build_background(&BackgroundSpec { m: -0.5, ..base }).is_err());
        assert!(build_background(&BackgroundSpec { nodes: 8, ..base }).is_err());
        // m = 0 with a nontrivial weight is rejected...
        assert!(build_background(&BackgroundSpec {
            m: 0.0,
            phi0: Phi0Spec { amplitude: 0.1, mode: 1, offset: 0.0 },
            ..base
        })
        .is_err());
        // ...as is any family whose compatibility term forces φ₀ ≢ 0.
        assert!(build_background(&BackgroundSpec {
            family: Family::HyperbolicBall { rho0: 1.0 },
            m: 0.0,
            ..base
        })
        .is_err());
        // A hemispherical cap with m = 0 is fine (q snaps to zero).
        assert!(build_background(&BackgroundSpec {
            family: Family::SphericalCap { theta0: PI / 2.0 },
            m: 0.0,
            ..base
        })
        .is_ok());
    }

    #[test]
    fn quadrature_total_volume_converges() {
        // Σμ → continuum volume at O(h²): hemisphere of S³ with φ₀ ≡ 0 has
        // volume |S²|·∫₀^{π/2} sin²θ dθ = 4π·π/4 = π².
        let vol = |nodes: usize| {
            let bg = build_background(&BackgroundSpec {
                family: Family::SphericalCap { theta0: PI / 2.0 },
                n: 3,
                m: 1.0,
                nodes,
                nodes_y: 1,
                phi0: Phi0Spec::ZERO,
            })
            .unwrap();
            bg.integrate(&vec![1.0; nodes]).unwrap()
        };
        let exact = PI * PI;
        let e1 = (vol(128) - exact).abs();
        let e2 = (vol(256) - exact).abs();
        assert!(e1 < 1e-3 && e2 < 0.3 * e1, "errors {e1}, {e2}");
    }
}
