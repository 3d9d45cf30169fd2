//! The sign and normalization ledger.
//!
//! Every analytic formula in the crate is written against the choices below.
//! They are collected in one place because almost every published account of
//! this material uses a slightly different set, and mixing two of them
//! produces silent factor-of-two or sign bugs that are very hard to localize
//! after the fact.
//!
//! Coordinates and metric:
//! - `z_j = x_j + i y_j`, with `dz = dx + i dy`. Derivatives
//!   `d/dz = (d/dx - i d/dy)/2` and `d/dzbar = (d/dx + i d/dy)/2`.
//! - Kaehler form `omega = (i/2) sum_j dz_j ^ dzbar_j`, so `|dz_j|^2 = 2` and
//!   a one-form `phi` has `|phi|^2 = 2 sum_j (|phi_{z_j}|^2 + |phi_{zbar_j}|^2)`.
//! - Two-forms and two-tensors carry weight 4 per component pair, forced by
//!   the Gram determinant of the `dz` basis.
//!
//! Contraction and Laplacian:
//! - The numeric trace map sends a (1,1)-form with components `a_{j kbar}` to
//!   `2 sum_j a_{j jbar}`; we write `lambda_contract` for it. With
//!   `d^c := dbar - d` on functions this makes
//!   `lambda_contract(d d^c u) = laplacian(u)`, the flat Euclidean Laplacian.
//!   `check_suite` verifies this identity on plane waves at runtime, together
//!   with a deliberately flipped `d^c` as a negative control.
//!
//! Metrics and adjoints:
//! - A metric `H` pairs sections by `<s, t>_H = t^* H s` (conjugate linear in
//!   the second slot). Endomorphisms pair by `<xi, eta>_H = tr(xi H^-1 eta^* H)`.
//! - The adjoint of a form-valued endomorphism swaps `dz <-> dzbar` as well as
//!   conjugating the coefficient: `(B dz_j)^* = H^-1 B^dagger H dzbar_j`.
//!
//! Decomposition of a connection `D = d + A` relative to `H`:
//! - `psi_H = (A + H^-1 A^dagger H - H^-1 dH) / 2` (the self-adjoint part),
//!   `A_H = A - psi_H` (the metric part). The compatibility
//!   `dH = H A_H + A_H^dagger H` holds exactly, also discretely, because it is
//!   pure pointwise algebra.
//!
//! Pseudo-curvature and the flow:
//! - `W = A_H^{0,1} + psi_H^{1,0}` and `G_H = dbar W + W ^ W`.
//! - `Phi(H) = 4 lambda_contract(G_H)`, which equals `2 D_H^* psi_H`.
//! - The flow is `H^-1 dH/dt = Phi(H)`, discretized by the exponential Euler
//!   step `H -> H^{1/2} exp(dt M) H^{1/2}` with `M = H^{1/2} Phi H^{-1/2}`.

/// Canonical, machine-readable statement of the convention ledger. The
/// checksum of this string is embedded in every run summary so that outputs
/// produced under different conventions can never be confused with each other.
pub const LEDGER: &str = "kaehler_form=(i/2)sum dz^dzbar;\
dz=dx+idy;ddz=(ddx-iddy)/2;\
dc=dbar-d;\
lambda_contract[(1,1)a]=2 sum a_{jjbar};\
laplacian=lambda_contract(d dc);\
phi=4*lambda_contract(G);\
G=dbar(W)+W^W;W=A_H^{01}+psi^{10};\
psi=(A+H^-1 A*H-H^-1 dH)/2;\
pairing<s,t>_H=t*Hs;end<x,y>_H=tr(x H^-1 y* H);\
form_adjoint:(B dz)*=H^-1 B* H dzbar;\
norm1=2sum(|z|^2+|zbar|^2);norm2=4percomp;\
flow:H^-1 dH/dt=phi;step=H^1/2 exp(dt H^1/2 phi H^-1/2) H^1/2;\
donaldson:M'(t)=-int tr(phi_{H(t)} s);\
sigma(K,H)=int tr(K^-1 H)+tr(H^-1 K)-2r;\
version=1";

/// Divided-difference kernel used by the closed-form Donaldson evaluation:
/// `psi_weight(x, y) = (e^{y-x} - (y-x) - 1) / (y-x)^2`, extended through the
/// removable singularity on the diagonal by its Taylor series.
pub fn psi_weight(x: f64, y: f64) -> f64 {
    let d = y - x;
    if d.abs() > PSI_SERIES_CUTOFF {
        (d.exp() - d - 1.0) / (d * d)
    } else {
        // 0.5 + d/6 + d^2/24 + d^3/120, accurate to ~1e-26 inside the cutoff
        0.5 + d * (1.0 / 6.0 + d * (1.0 / 24.0 + d * (1.0 / 120.0)))
    }
}

/// Switch-over point between the analytic expression for `psi_weight` and its
/// Taylor expansion. Chosen so cancellation error stays below 1e-12.
pub const PSI_SERIES_CUTOFF: f64 = 1e-5;

/// Hex SHA-256 digest of [`LEDGER`]; stamped into run summaries.
pub fn ledger_checksum() -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(LEDGER.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_weight_continuous_across_cutoff() {
        // reference: the series carried far enough to be exact for |d| <= 1e-3
        let reference = |d: f64| {
            let mut term = 0.5;
            let mut acc = 0.0;
            for k in 2..12u32 {
                acc += term;
                term *= d / (k + 1) as f64;
            }
            acc
        };
        for &d in &[9e-6, 1.1e-5, 1e-4, 1e-3, -9e-6, -1.1e-5, -1e-4, -1e-3] {
            let got = psi_weight(0.0, d);
            // the analytic branch loses ~1e-6 relative to cancellation right at
            // the cutoff; the combined function must stay well inside 1e-5
            assert!(
                (got - reference(d)).abs() < 1e-5 * reference(d),
                "d={d}: got {got}, want {}",
                reference(d)
            );
        }
        assert_eq!(psi_weight(3.0, 3.0), 0.5);
    }

    #[test]
    fn psi_weight_spot_values() {
        // psi(0, 1) = e - 2
        assert!((psi_weight(0.0, 1.0) - (std::f64::consts::E - 2.0)).abs() < 1e-15);
        // psi(1, 0) = 1/e
        assert!((psi_weight(1.0, 0.0) - f64::exp(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn checksum_is_stable() {
        let a = ledger_checksum();
        let b = ledger_checksum();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
