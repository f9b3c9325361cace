//! Small dense and banded linear-algebra kernels.
//!
//! Sized for the meshes this crate targets (hundreds to a few thousand
//! nodes): a tridiagonal solve for the semi-implicit stepper, implicit-shift
//! QL for symmetric tridiagonal eigenvalues, Wilkinson-style inverse
//! iteration for selected eigenvectors, and a Householder + QL pair for the
//! dense two-dimensional path. Hand-rolled rather than pulling in a BLAS
//! binding so the core stays `no_std`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[cfg_attr(test, allow(unused_imports))] // shadowed by std's inherent methods in test builds
use crate::numeric::FloatExt;

/// Solves a tridiagonal system by the Thomas algorithm (no pivoting — the
/// callers assemble strictly diagonally dominant matrices).
///
/// `sub`/`sup` have length `n-1`, `diag` and `rhs` length `n`.
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || sub.len() != n - 1 || sup.len() != n - 1 || rhs.len() != n {
        return Err(Error::ShapeMismatch {
            what: "tridiagonal system",
            expected: n,
            got: rhs.len(),
        });
    }
    let scale = diag.iter().chain(sub).chain(sup).fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut c = vec![0.0; n]; // modified superdiagonal
    let mut x = vec![0.0; n];
    let mut den = diag[0];
    if den.abs() <= f64::EPSILON * scale {
        return Err(Error::SolveFailure {
            what: "thomas_solve",
            details: alloc::format!("vanishing pivot at row 0 (|{den:e}|)"),
        });
    }
    c[0] = sup[0] / den;
    x[0] = rhs[0] / den;
    for i in 1..n {
        den = diag[i] - sub[i - 1] * c[i - 1];
        if den.abs() <= f64::EPSILON * scale {
            return Err(Error::SolveFailure {
                what: "thomas_solve",
                details: alloc::format!("vanishing pivot at row {i} (|{den:e}|)"),
            });
        }
        if i < n - 1 {
            c[i] = sup[i] / den;
        }
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// QL with implicit shifts on a symmetric tridiagonal matrix.
///
/// `d` holds the diagonal, `e[i]` the coupling between rows `i` and `i+1`
/// (`e[n-1]` is workspace and must be 0). On success `d` holds the
/// eigenvalues (unsorted). When `z` is given (flat row-major `n×n`,
/// pre-seeded with the basis the tridiagonal is expressed in), its columns
/// accumulate the rotations, so column `j` ends up as the eigenvector for
/// `d[j]`.
fn tqli(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::SolveFailure {
                    what: "tridiagonal QL",
                    details: alloc::format!("no convergence for eigenvalue {l} in 50 sweeps"),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let sign_rg = if g >= 0.0 { r.abs() } else { -r.abs() };
            g = d[mm] - d[l] + e[l] / (g + sign_rg);
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut recovered = false;
            for i in (l..mm).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    recovered = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zz) = z.as_deref_mut() {
                    for k in 0..n {
                        f = zz[k * n + i + 1];
                        zz[k * n + i + 1] = s * zz[k * n + i] + c * f;
                        zz[k * n + i] = c * zz[k * n + i] - s * f;
                    }
                }
            }
            if recovered {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok(())
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (length `n-1`), sorted ascending.
pub fn sym_tridiag_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if off.len() + 1 != n {
        return Err(Error::ShapeMismatch { what: "off-diagonal", expected: n - 1, got: off.len() });
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    tqli(&mut d, &mut e, None)?;
    d.sort_unstable_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(d)
}

fn xorshift_unit(state: &mut u64) -> f64 {
    let mut x = *state;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    *state = x;
    let bits = x.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11;
    bits as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// One eigenvector of a symmetric tridiagonal matrix by inverse iteration at
/// the (already converged) eigenvalue `lambda`. Euclidean-normalized, sign
/// fixed so the largest-magnitude component is positive.
pub fn sym_tridiag_eigenvector(diag: &[f64], off: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = diag.len();
    if off.len() + 1 != n {
        return Err(Error::ShapeMismatch { what: "off-diagonal", expected: n - 1, got: off.len() });
    }
    let scale = diag
        .iter()
        .map(|&v| (v - lambda).abs())
        .chain(off.iter().map(|&v| v.abs()))
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (n as u64).rotate_left(17);
    let mut x: Vec<f64> = (0..n).map(|_| xorshift_unit(&mut state)).collect();
    normalize(&mut x);
    let mut converged = false;
    for _ in 0..8 {
        let y = solve_shifted(diag, off, lambda, &x, scale)?;
        let norm = y.iter().fold(0.0f64, |a, &v| a + v * v).sqrt();
        // Growth to ~1/(ε·scale) means λ sits within roundoff of the
        // spectrum and y is dominated by the eigenvector.
        converged = norm * (f64::EPSILON * scale) >= 0.01;
        x = y;
        let inv = 1.0 / norm;
        for v in &mut x {
            *v *= inv;
        }
        if converged {
            break;
        }
    }
    if !converged {
        // Residual fallback: accept if ‖Tx − λx‖ is small relative to scale.
        let mut res = 0.0f64;
        for i in 0..n {
            let mut t = (diag[i] - lambda) * x[i];
            if i > 0 {
                t += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                t += off[i] * x[i + 1];
            }
            res = res.max(t.abs());
        }
        if res > 1e-8 * scale {
            return Err(Error::SolveFailure {
                what: "inverse iteration",
                details: alloc::format!("residual {res:e} at eigenvalue {lambda:e}"),
            });
        }
    }
    let mut imax = 0;
    for i in 1..n {
        if x[i].abs() > x[imax].abs() {
            imax = i;
        }
    }
    if x[imax] < 0.0 {
        for v in &mut x {
            *v = -*v;
        }
    }
    Ok(x)
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().fold(0.0f64, |a, &v| a + v * v).sqrt();
    let inv = 1.0 / norm;
    for v in x {
        *v *= inv;
    }
}

/// Solves `(T - λI) y = b` by Gaussian elimination with partial pivoting
/// (fill-in limited to a second superdiagonal). Near-singular pivots are
/// replaced by `ε·scale` — the standard inverse-iteration device.
fn solve_shifted(diag: &[f64], off: &[f64], lambda: f64, b: &[f64], scale: f64) -> Result<Vec<f64>> {
    let n = diag.len();
    let tiny = f64::EPSILON * scale;
    let mut r0: Vec<f64> = diag.iter().map(|&v| v - lambda).collect();
    let mut r1 = vec![0.0; n];
    let mut r2 = vec![0.0; n];
    r1[..n - 1].copy_from_slice(off);
    let mut sub = off.to_vec();
    let mut rhs = b.to_vec();
    for k in 0..n - 1 {
        if sub[k].abs() > r0[k].abs() {
            // Swap rows k and k+1 (row k+1 occupies columns k..k+2).
            let (a0, a1, a2, ar) = (r0[k], r1[k], r2[k], rhs[k]);
            r0[k] = sub[k];
            r1[k] = r0[k + 1];
            r2[k] = if k + 1 < n - 1 { r1[k + 1] } else { 0.0 };
            rhs[k] = rhs[k + 1];
            sub[k] = a0;
            r0[k + 1] = a1;
            if k + 1 < n - 1 {
                r1[k + 1] = a2;
            }
            rhs[k + 1] = ar;
        }
        if r0[k] == 0.0 {
            r0[k] = tiny;
        }
        let mlt = sub[k] / r0[k];
        r0[k + 1] -= mlt * r1[k];
        if k + 1 < n - 1 {
            r1[k + 1] -= mlt * r2[k];
        }
        rhs[k + 1] -= mlt * rhs[k];
    }
    if r0[n - 1] == 0.0 {
        r0[n - 1] = tiny;
    }
    let mut y = vec![0.0; n];
    y[n - 1] = rhs[n - 1] / r0[n - 1];
    if n >= 2 {
        y[n - 2] = (rhs[n - 2] - r1[n - 2] * y[n - 1]) / r0[n - 2];
    }
    for k in (0..n.saturating_sub(2)).rev() {
        y[k] = (rhs[k] - r1[k] * y[k + 1] - r2[k] * y[k + 2]) / r0[k];
    }
    Ok(y)
}

/// Householder reduction of a symmetric matrix (flat row-major) to
/// tridiagonal form; when `accumulate` is set, `z` is overwritten with the
/// orthogonal transform for later eigenvector recovery.
fn tred2(z: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut sc = 0.0;
            for k in 0..=l {
                sc += z[i * n + k].abs();
            }
            if sc == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= sc;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = sc * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut fsum = 0.0;
                for j in 0..=l {
                    if accumulate {
                        z[j * n + i] = z[i * n + j] / h;
                    }
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in j + 1..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    fsum += e[j] * z[i * n + j];
                }
                let hh = fsum / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if accumulate {
            if d[i] != 0.0 {
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..i {
                        g += z[i * n + k] * z[k * n + j];
                    }
                    for k in 0..i {
                        z[k * n + j] -= g * z[k * n + i];
                    }
                }
            }
            d[i] = z[i * n + i];
            z[i * n + i] = 1.0;
            for j in 0..i {
                z[j * n + i] = 0.0;
                z[i * n + j] = 0.0;
            }
        } else {
            d[i] = z[i * n + i];
        }
    }
}

/// Full eigendecomposition of a dense symmetric matrix (flat row-major).
///
/// Returns eigenvalues ascending; with `want_vectors`, also a flat buffer
/// whose row `k` (`[k*n .. (k+1)*n]`) is the orthonormal eigenvector for
/// eigenvalue `k`.
pub fn sym_eigen_dense(
    a: &[f64],
    n: usize,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if a.len() != n * n {
        return Err(Error::ShapeMismatch { what: "dense matrix", expected: n * n, got: a.len() });
    }
    let mut z = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, n, &mut d, &mut e, want_vectors);
    // Shift the off-diagonal into the (i, i+1) convention tqli expects.
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    tqli(&mut d, &mut e, if want_vectors { Some(&mut z) } else { None })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vectors = want_vectors.then(|| {
        let mut out = vec![0.0; n * n];
        for (k, &col) in order.iter().enumerate() {
            for i in 0..n {
                out[k * n + i] = z[i * n + col];
            }
        }
        out
    });
    Ok((values, vectors))
}
