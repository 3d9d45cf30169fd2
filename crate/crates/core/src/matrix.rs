//! Dense complex linear algebra for small fibre dimensions.
//!
//! Matrices are row-major `&[Complex64]` slices of length `r * r`. The fibre
//! rank in this crate is tiny (2 to 8), so simple cubic algorithms with
//! careful pivoting and a cyclic Jacobi eigensolver are both fast enough and
//! easy to audit. Everything here is deterministic: no randomized pivoting,
//! no threading.

use num_complex::Complex64;

use crate::error::NhymError;
use crate::Result;

const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_REL_TOL: f64 = 1e-15;
const PIVOT_REL_TOL: f64 = 1e-300;

pub fn ident(r: usize) -> Vec<Complex64> {
    let mut m = vec![Complex64::default(); r * r];
    for i in 0..r {
        m[i * r + i] = Complex64::new(1.0, 0.0);
    }
    m
}

pub fn mul(a: &[Complex64], b: &[Complex64], r: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); r * r];
    mul_into(a, b, &mut out, r);
    out
}

pub fn mul_into(a: &[Complex64], b: &[Complex64], out: &mut [Complex64], r: usize) {
    for i in 0..r {
        for j in 0..r {
            let mut acc = Complex64::default();
            for k in 0..r {
                acc += a[i * r + k] * b[k * r + j];
            }
            out[i * r + j] = acc;
        }
    }
}

pub fn adjoint(a: &[Complex64], r: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); r * r];
    adjoint_into(a, &mut out, r);
    out
}

pub fn adjoint_into(a: &[Complex64], out: &mut [Complex64], r: usize) {
    for i in 0..r {
        for j in 0..r {
            out[j * r + i] = a[i * r + j].conj();
        }
    }
}

pub fn trace(a: &[Complex64], r: usize) -> Complex64 {
    (0..r).map(|i| a[i * r + i]).sum()
}

pub fn commutator(a: &[Complex64], b: &[Complex64], r: usize) -> Vec<Complex64> {
    let mut out = mul(a, b, r);
    let ba = mul(b, a, r);
    for (x, y) in out.iter_mut().zip(ba) {
        *x -= y;
    }
    out
}

pub fn frobenius(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian part `(a + a^*) / 2`.
pub fn hermitize(a: &[Complex64], r: usize) -> Vec<Complex64> {
    let mut out = adjoint(a, r);
    for (x, y) in out.iter_mut().zip(a) {
        *x = (*x + y) * 0.5;
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &[Complex64], r: usize) -> Result<Vec<Complex64>> {
    let mut m = a.to_vec();
    let mut inv = ident(r);
    let scale = frobenius(a).max(f64::MIN_POSITIVE);
    for col in 0..r {
        let mut pivot_row = col;
        let mut pivot_mag = m[col * r + col].norm();
        for row in col + 1..r {
            let mag = m[row * r + col].norm();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag <= PIVOT_REL_TOL * scale {
            return Err(NhymError::Singular { pivot: pivot_mag });
        }
        if pivot_row != col {
            for k in 0..r {
                m.swap(col * r + k, pivot_row * r + k);
                inv.swap(col * r + k, pivot_row * r + k);
            }
        }
        let pivot = m[col * r + col];
        for k in 0..r {
            m[col * r + k] /= pivot;
            inv[col * r + k] /= pivot;
        }
        for row in 0..r {
            if row == col {
                continue;
            }
            let factor = m[row * r + col];
            if factor == Complex64::default() {
                continue;
            }
            for k in 0..r {
                let mc = m[col * r + k];
                let ic = inv[col * r + k];
                m[row * r + k] -= factor * mc;
                inv[row * r + k] -= factor * ic;
            }
        }
    }
    Ok(inv)
}

/// Determinant via LU with partial pivoting.
pub fn det(a: &[Complex64], r: usize) -> Complex64 {
    let mut m = a.to_vec();
    let mut sign = Complex64::new(1.0, 0.0);
    for col in 0..r {
        let mut pivot_row = col;
        let mut pivot_mag = m[col * r + col].norm();
        for row in col + 1..r {
            let mag = m[row * r + col].norm();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == 0.0 {
            return Complex64::default();
        }
        if pivot_row != col {
            for k in 0..r {
                m.swap(col * r + k, pivot_row * r + k);
            }
            sign = -sign;
        }
        let pivot = m[col * r + col];
        for row in col + 1..r {
            let factor = m[row * r + col] / pivot;
            for k in col..r {
                let v = m[col * r + k];
                m[row * r + k] -= factor * v;
            }
        }
    }
    let mut d = sign;
    for i in 0..r {
        d *= m[i * r + i];
    }
    d
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns ascending eigenvalues and a unitary `u` whose columns are the
/// eigenvectors: `a = u diag(lambda) u^*`, with `u[i * r + k]` the `i`-th
/// component of eigenvector `k`.
pub fn hermitian_eigen(a: &[Complex64], r: usize) -> Result<(Vec<f64>, Vec<Complex64>)> {
    debug_assert_eq!(a.len(), r * r);
    let mut m = hermitize(a, r);
    let mut u = ident(r);
    let scale = frobenius(&m).max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..r {
            for q in p + 1..r {
                off += m[p * r + q].norm_sqr();
            }
        }
        if off.sqrt() <= JACOBI_REL_TOL * scale {
            return Ok(sorted_eigen(&m, u, r));
        }
        for p in 0..r {
            for q in p + 1..r {
                let apq = m[p * r + q];
                let mag = apq.norm();
                if mag <= JACOBI_REL_TOL * scale * 1e-2 {
                    continue;
                }
                let phase = apq / mag; // e^{i phi}
                let app = m[p * r + p].re;
                let aqq = m[q * r + q].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // V = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] acting on
                // columns (p, q); m <- V^* m V, u <- u V.
                let sp = s * phase.conj();
                let cp = c * phase.conj();
                // columns of m
                for k in 0..r {
                    let xp = m[k * r + p];
                    let xq = m[k * r + q];
                    m[k * r + p] = c * xp - sp * xq;
                    m[k * r + q] = s * xp + cp * xq;
                }
                // rows of m (conjugated coefficients)
                for k in 0..r {
                    let xp = m[p * r + k];
                    let xq = m[q * r + k];
                    m[p * r + k] = c * xp - sp.conj() * xq;
                    m[q * r + k] = s * xp + cp.conj() * xq;
                }
                // clean up what the rotation annihilated
                m[p * r + q] = Complex64::default();
                m[q * r + p] = Complex64::default();
                m[p * r + p] = Complex64::new(m[p * r + p].re, 0.0);
                m[q * r + q] = Complex64::new(m[q * r + q].re, 0.0);
                // accumulate the eigenvector basis
                for k in 0..r {
                    let xp = u[k * r + p];
                    let xq = u[k * r + q];
                    u[k * r + p] = c * xp - sp * xq;
                    u[k * r + q] = s * xp + cp * xq;
                }
            }
        }
    }
    let mut off = 0.0;
    for p in 0..r {
        for q in p + 1..r {
            off += m[p * r + q].norm_sqr();
        }
    }
    if off.sqrt() <= JACOBI_REL_TOL * scale {
        Ok(sorted_eigen(&m, u, r))
    } else {
        Err(NhymError::EigenNoConvergence { sweeps: JACOBI_MAX_SWEEPS, off: off.sqrt() })
    }
}

fn sorted_eigen(m: &[Complex64], u: Vec<Complex64>, r: usize) -> (Vec<f64>, Vec<Complex64>) {
    let mut order: Vec<usize> = (0..r).collect();
    let values: Vec<f64> = (0..r).map(|i| m[i * r + i].re).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut sorted_u = vec![Complex64::default(); r * r];
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..r {
            sorted_u[i * r + new_col] = u[i * r + old_col];
        }
    }
    (sorted_values, sorted_u)
}

/// `u diag(f(lambda)) u^*` for a Hermitian `a = u diag(lambda) u^*`.
pub fn hermitian_fn(a: &[Complex64], r: usize, f: impl Fn(f64) -> f64) -> Result<Vec<Complex64>> {
    let (vals, u) = hermitian_eigen(a, r)?;
    Ok(assemble_fn(&vals, &u, r, f))
}

/// Rebuild `u diag(f(lambda)) u^*` from a precomputed eigendecomposition.
pub fn assemble_fn(vals: &[f64], u: &[Complex64], r: usize, f: impl Fn(f64) -> f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); r * r];
    for k in 0..r {
        let fv = f(vals[k]);
        if fv == 0.0 {
            continue;
        }
        for i in 0..r {
            let uik = u[i * r + k];
            for j in 0..r {
                out[i * r + j] += fv * uik * u[j * r + k].conj();
            }
        }
    }
    out
}

pub fn exp_hermitian(a: &[Complex64], r: usize) -> Result<Vec<Complex64>> {
    hermitian_fn(a, r, f64::exp)
}

/// Logarithm of a Hermitian positive definite matrix.
pub fn log_hermitian_pd(a: &[Complex64], r: usize) -> Result<Vec<Complex64>> {
    let (vals, u) = hermitian_eigen(a, r)?;
    if let Some(&bad) = vals.iter().find(|v| **v <= 0.0) {
        return Err(NhymError::NotPositiveDefinite { size: r, eigenvalue: bad });
    }
    Ok(assemble_fn(&vals, &u, r, f64::ln))
}

/// Square root and inverse square root of a Hermitian positive definite
/// matrix, computed from one eigendecomposition.
pub fn sqrt_and_inv_sqrt(a: &[Complex64], r: usize) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let (vals, u) = hermitian_eigen(a, r)?;
    if let Some(&bad) = vals.iter().find(|v| **v <= 0.0) {
        return Err(NhymError::NotPositiveDefinite { size: r, eigenvalue: bad });
    }
    let root = assemble_fn(&vals, &u, r, f64::sqrt);
    let inv_root = assemble_fn(&vals, &u, r, |v| 1.0 / v.sqrt());
    Ok((root, inv_root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(r: usize, seed: u64) -> Vec<Complex64> {
        // cheap deterministic generator, good enough for smoke values
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut m = vec![Complex64::default(); r * r];
        for i in 0..r {
            for j in i..r {
                if i == j {
                    m[i * r + j] = c(2.0 * next(), 0.0);
                } else {
                    let v = c(next(), next());
                    m[i * r + j] = v;
                    m[j * r + i] = v.conj();
                }
            }
        }
        m
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn eigen_known_2x2() {
        // pauli x has eigenvalues -1, 1
        let a = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let (vals, u) = hermitian_eigen(&a, 2).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        let rebuilt = assemble_fn(&vals, &u, 2, |x| x);
        assert!(max_abs_diff(&rebuilt, &a) < 1e-14);
    }

    #[test]
    fn eigen_complex_offdiagonal() {
        // [[1, i],[-i, 1]] has eigenvalues 0 and 2
        let a = vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)];
        let (vals, _) = hermitian_eigen(&a, 2).unwrap();
        assert!(vals[0].abs() < 1e-13);
        assert!((vals[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_reconstructs_and_is_unitary() {
        for r in 1..=5 {
            for seed in 0..4 {
                let a = random_hermitian(r, seed * 31 + r as u64);
                let (vals, u) = hermitian_eigen(&a, r).unwrap();
                let rebuilt = assemble_fn(&vals, &u, r, |x| x);
                assert!(max_abs_diff(&rebuilt, &a) < 1e-12, "r={r} seed={seed}");
                let ut = adjoint(&u, r);
                let prod = mul(&ut, &u, r);
                assert!(max_abs_diff(&prod, &ident(r)) < 1e-12);
                for w in vals.windows(2) {
                    assert!(w[0] <= w[1] + 1e-14);
                }
            }
        }
    }

    #[test]
    fn exp_log_roundtrip() {
        for seed in 0..4 {
            let s = random_hermitian(3, 100 + seed);
            let e = exp_hermitian(&s, 3).unwrap();
            let back = log_hermitian_pd(&e, 3).unwrap();
            assert!(max_abs_diff(&back, &hermitize(&s, 3)) < 1e-11);
        }
    }

    #[test]
    fn log_rejects_non_positive() {
        let a = vec![c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)];
        assert!(matches!(
            log_hermitian_pd(&a, 2),
            Err(NhymError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn inverse_and_det() {
        let a = vec![c(1.0, 0.0), c(2.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)];
        let inv = inverse(&a, 2).unwrap();
        let prod = mul(&a, &inv, 2);
        assert!(max_abs_diff(&prod, &ident(2)) < 1e-13);
        // det = 1*3 - (2+i)(-i) = 3 - (1 - 2i)... direct: (2+i)*(-i) = -2i - i^2 = 1 - 2i
        let want = c(3.0, 0.0) - c(1.0, -2.0);
        assert!((det(&a, 2) - want).norm() < 1e-13);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        assert!(matches!(inverse(&a, 2), Err(NhymError::Singular { .. })));
        assert!(det(&a, 2).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn prop_eigen_reconstructs(seed in 0u64..500, r in 1usize..5) {
            let a = random_hermitian(r, seed);
            let (vals, u) = hermitian_eigen(&a, r).unwrap();
            let rebuilt = assemble_fn(&vals, &u, r, |x| x);
            prop_assert!(max_abs_diff(&rebuilt, &a) < 1e-11);
        }

        #[test]
        fn prop_inverse_roundtrip(seed in 0u64..500, r in 1usize..5) {
            let mut a = random_hermitian(r, seed);
            // shift to make it comfortably invertible
            for i in 0..r {
                a[i * r + i] += c(3.0, 0.0);
            }
            let inv = inverse(&a, r).unwrap();
            let prod = mul(&a, &inv, r);
            prop_assert!(max_abs_diff(&prod, &ident(r)) < 1e-10);
        }
    }
}
