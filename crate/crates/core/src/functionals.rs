//! Global functionals of a metric: energy, the distance-like comparison
//! functional sigma, and the Donaldson functional in both its closed form
//! and its path-integrated form.
//!
//! The closed form writes `M(K, L)`, `L = K exp(s)`, as
//!
//! ```text
//!   M = -Int tr(Phi_K s)
//!     + Int sum_j sum_{ab} 2 Psi(l_a - l_b) |P_{j,ab}|^2
//!                        + 2 Psi(l_b - l_a) |Q_{j,ab}|^2
//! ```
//!
//! in the pointwise orthonormal eigenbasis of `s` (eigenvalues `l` ascending,
//! `a` the row index), with `Psi(d) = (exp(d) - d - 1) / d^2`,
//! `P_j = (ds + [A_{z_j}, s])` the full-connection derivative and
//! `Q_j = P_j - 2 [psi_{K, z_j}, s]` its sigma-twisted partner. Only `dz`
//! components appear; the `dzbar` halves contribute equally and are folded
//! into the factor 2.

use num_complex::Complex64;

use crate::connection::{decompose, phi, Connection};
use crate::conventions::psi_weight;
use crate::fields::{d_dz, metric_exp, metric_log, EndField, MetricField};
use crate::geometry::SpectralEngine;
use crate::matrix;
use crate::Result;

/// `Int |psi_H|^2` over the torus.
pub fn energy(
    eng: &SpectralEngine,
    conn: &Connection,
    h: &MetricField,
    h_inv: &EndField,
) -> f64 {
    let dec = decompose(eng, conn, h, h_inv);
    let density = crate::fields::one_form_h_norm_sq(&dec.psi, h, h_inv);
    eng.integrate_real(&density)
}

/// Pointwise comparison density `tr(K^-1 H) + tr(H^-1 K) - 2r`.
pub fn sigma_pointwise(k: &MetricField, h: &MetricField) -> Result<Vec<f64>> {
    let r = k.rank();
    let k_inv = k.inverse()?;
    let h_inv = h.inverse()?;
    let mut out = Vec::with_capacity(k.nodes());
    for node in 0..k.nodes() {
        let a = matrix::mul(k_inv.node(node), h.node(node), r);
        let b = matrix::mul(h_inv.node(node), k.node(node), r);
        out.push(matrix::trace(&a, r).re + matrix::trace(&b, r).re - 2.0 * r as f64);
    }
    Ok(out)
}

/// Integrated comparison functional; zero exactly when the metrics agree.
pub fn sigma(eng: &SpectralEngine, k: &MetricField, h: &MetricField) -> Result<f64> {
    Ok(eng.integrate_real(&sigma_pointwise(k, h)?))
}

/// Closed-form Donaldson functional `M(K, L)`.
pub fn donaldson_closed(
    eng: &SpectralEngine,
    conn: &Connection,
    k: &MetricField,
    l: &MetricField,
) -> Result<f64> {
    let s = metric_log(k, l)?;
    donaldson_closed_from_log(eng, conn, k, &s)
}

/// Closed form with the logarithm `s = log_K(L)` already in hand.
pub fn donaldson_closed_from_log(
    eng: &SpectralEngine,
    conn: &Connection,
    k: &MetricField,
    s: &EndField,
) -> Result<f64> {
    let r = conn.rank();
    let nodes = conn.nodes();
    let k_inv = k.inverse()?;
    let phi_k = phi(eng, conn, k, &k_inv);
    let dec = decompose(eng, conn, k, &k_inv);

    // linear term: -Int tr(Phi_K s)
    let mut linear = vec![Complex64::default(); nodes];
    for node in 0..nodes {
        let prod = matrix::mul(phi_k.node(node), s.node(node), r);
        linear[node] = matrix::trace(&prod, r);
    }
    let linear_term = -eng.integrate(&linear).re;

    // quadratic term, accumulated per complex direction
    let identity_base = k.is_identity();
    let mut density = vec![0.0; nodes];
    for j in 0..conn.n() {
        let ds = d_dz(eng, s, j);
        let p = ds.add(&conn.form.dz[j].commutator(s));
        let q = p.sub(&dec.psi.dz[j].commutator(s).scale_re(2.0));
        for node in 0..nodes {
            let (vals, u) = if identity_base {
                matrix::hermitian_eigen(&matrix::hermitize(s.node(node), r), r)?
            } else {
                let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
                let m = matrix::hermitize(
                    &matrix::mul(&matrix::mul(&ks, s.node(node), r), &kis, r),
                    r,
                );
                matrix::hermitian_eigen(&m, r)?
            };
            let ut = matrix::adjoint(&u, r);
            let to_frame = |x: &[Complex64]| -> Vec<Complex64> {
                if identity_base {
                    matrix::mul(&matrix::mul(&ut, x, r), &u, r)
                } else {
                    let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r).unwrap();
                    let inner = matrix::mul(&matrix::mul(&ks, x, r), &kis, r);
                    matrix::mul(&matrix::mul(&ut, &inner, r), &u, r)
                }
            };
            let pf = to_frame(p.node(node));
            let qf = to_frame(q.node(node));
            let mut acc = 0.0;
            for a in 0..r {
                for b in 0..r {
                    // P carries the flipped weight, Q the straight one
                    acc += 2.0 * psi_weight(vals[b], vals[a]) * pf[a * r + b].norm_sqr();
                    acc += 2.0 * psi_weight(vals[a], vals[b]) * qf[a * r + b].norm_sqr();
                }
            }
            density[node] += acc;
        }
    }
    Ok(linear_term + eng.integrate_real(&density))
}

/// Derivative of the Donaldson functional along the segment
/// `H(t) = K exp(t s)`: `M'(t) = -Int tr(Phi_{H(t)} s)`.
pub fn donaldson_rate(
    eng: &SpectralEngine,
    conn: &Connection,
    k: &MetricField,
    s: &EndField,
    t: f64,
) -> Result<f64> {
    let h = metric_exp(k, &s.scale_re(t))?;
    let h_inv = h.inverse()?;
    let p = phi(eng, conn, &h, &h_inv);
    let r = conn.rank();
    let mut density = vec![Complex64::default(); conn.nodes()];
    for node in 0..conn.nodes() {
        let prod = matrix::mul(p.node(node), s.node(node), r);
        density[node] = matrix::trace(&prod, r);
    }
    Ok(-eng.integrate(&density).re)
}

/// Donaldson functional as a composite-Simpson integral of
/// [`donaldson_rate`] along the exponential segment from `K` to `L`.
/// `steps` must be even.
pub fn donaldson_path(
    eng: &SpectralEngine,
    conn: &Connection,
    k: &MetricField,
    l: &MetricField,
    steps: usize,
) -> Result<f64> {
    assert!(steps >= 2 && steps % 2 == 0, "Simpson needs an even step count");
    let s = metric_log(k, l)?;
    let h = 1.0 / steps as f64;
    let mut acc = donaldson_rate(eng, conn, k, &s, 0.0)? + donaldson_rate(eng, conn, k, &s, 1.0)?;
    for i in 1..steps {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += weight * donaldson_rate(eng, conn, k, &s, i as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}

/// First variation of `M(K, K exp(t v))` at `t = 0`: `-Int tr(Phi_K v)`.
pub fn first_variation(
    eng: &SpectralEngine,
    conn: &Connection,
    k: &MetricField,
    v: &EndField,
) -> Result<f64> {
    donaldson_rate(eng, conn, k, v, 0.0)
}
