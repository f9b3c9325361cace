//! Small numerical utilities: `no_std` float math, deterministic pairwise
//! reductions, integer-aware powers, Gauss–Legendre cell quadrature, and the
//! area of round spheres.

/// Float transcendentals routed through `libm` so the crate builds without
/// `std`. Inside `cfg(test)` builds (where `std` is linked) the inherent
/// methods shadow these; both call into the same ABI.
#[cfg_attr(test, allow(dead_code))]
pub(crate) trait FloatExt {
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn sin(self) -> f64;
    fn cos(self) -> f64;
    fn sinh(self) -> f64;
    fn cosh(self) -> f64;
    fn sqrt(self) -> f64;
    fn powf(self, p: f64) -> f64;
    fn hypot(self, other: f64) -> f64;
    fn round(self) -> f64;
}

impl FloatExt for f64 {
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    fn ln(self) -> f64 {
        libm::log(self)
    }
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    fn sinh(self) -> f64 {
        libm::sinh(self)
    }
    fn cosh(self) -> f64 {
        libm::cosh(self)
    }
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    fn powf(self, p: f64) -> f64 {
        libm::pow(self, p)
    }
    fn hypot(self, other: f64) -> f64 {
        libm::hypot(self, other)
    }
    fn round(self) -> f64 {
        libm::round(self)
    }
}

/// `x^k` by binary exponentiation for integer `k` (exact operation count,
/// no transcendental calls). `x` must be nonzero when `k < 0`.
pub fn ipow(x: f64, k: i32) -> f64 {
    let mut e = k.unsigned_abs();
    let mut base = x;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    if k < 0 {
        1.0 / acc
    } else {
        acc
    }
}

/// `x^p` for `x > 0`, dispatching to [`ipow`] when `p` is (exactly) a small
/// integer — the conformal exponents are integers for several `(n, m)` pairs
/// of interest and the integer path is both faster and exactly reproducible
/// across platforms.
pub fn powx(x: f64, p: f64) -> f64 {
    let r = p.round();
    if p == r && r.abs() <= 128.0 {
        ipow(x, r as i32)
    } else {
        x.powf(p)
    }
}

/// Deterministic pairwise (cascade) sum; error grows like `O(log n)·eps`
/// instead of `O(n)·eps`, and the association order is fixed by the input
/// length alone.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(0), …, f(n-1)` without allocating a scratch buffer.
pub fn pairwise_map_sum(n: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn go(lo: usize, hi: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
        if hi - lo <= 32 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

/// Abscissae (right half) and weights of the 8-point Gauss–Legendre rule on
/// `[-1, 1]`; exact for polynomials of degree ≤ 15.
const GL8_X: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL8_W: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// `∫_a^b f` by 8-point Gauss–Legendre. Used for the axis cell's measure,
/// where the trapezoid weight would degenerate with the reduction weight.
pub fn gauss_integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let s = 0.5 * (b - a);
    let mut acc = 0.0;
    for k in 0..4 {
        acc += GL8_W[k] * (f(c + s * GL8_X[k]) + f(c - s * GL8_X[k]));
    }
    s * acc
}

/// Γ(k/2) for integer `k ≥ 1`, by the recursion `Γ(x+1) = x Γ(x)` from
/// `Γ(1/2) = √π` or `Γ(1) = 1`.
fn gamma_half(k: u32) -> f64 {
    let mut x;
    let mut g;
    if k.is_multiple_of(2) {
        x = 1.0;
        g = 1.0;
    } else {
        x = 0.5;
        g = core::f64::consts::PI.sqrt();
    }
    while x + 0.5 < k as f64 / 2.0 + 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface area of the unit sphere `S^k ⊂ R^{k+1}`:
/// `2 π^{(k+1)/2} / Γ((k+1)/2)`. (`S^2` gives `4π`.)
pub fn unit_sphere_area(k: u32) -> f64 {
    let kp1 = k + 1;
    2.0 * core::f64::consts::PI.powf(kp1 as f64 / 2.0) / gamma_half(kp1)
}
