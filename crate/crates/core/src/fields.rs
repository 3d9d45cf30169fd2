//! Endomorphism valued fields, metrics and differential forms on a torus grid.
//!
//! Storage is node-major: an [`EndField`] keeps the full `r x r` matrix of a
//! node contiguously, which makes the pointwise algebra cache friendly; the
//! spectral operators gather per-entry arrays on demand.
//!
//! Norm conventions (see [`crate::conventions`]): endomorphisms pair by
//! `tr(x H^-1 y^* H)`, one-forms carry weight 2 per `dz`/`dzbar` component,
//! two-forms and two-tensors weight 4.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::NhymError;
use crate::geometry::SpectralEngine;
use crate::matrix;
use crate::Result;

/// Plain complex scalar field, length `nodes`.
pub type ScalarField = Vec<Complex64>;

/// Field of `rank x rank` complex matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EndField {
    rank: usize,
    nodes: usize,
    data: Vec<Complex64>,
}

impl EndField {
    pub fn zeros(nodes: usize, rank: usize) -> Self {
        Self { rank, nodes, data: vec![Complex64::default(); nodes * rank * rank] }
    }

    pub fn identity(nodes: usize, rank: usize) -> Self {
        let mut f = Self::zeros(nodes, rank);
        for node in 0..nodes {
            for i in 0..rank {
                f.data[node * rank * rank + i * rank + i] = Complex64::new(1.0, 0.0);
            }
        }
        f
    }

    /// Same constant matrix at every node.
    pub fn constant(nodes: usize, rank: usize, mat: &[Complex64]) -> Self {
        assert_eq!(mat.len(), rank * rank);
        let mut f = Self::zeros(nodes, rank);
        for node in 0..nodes {
            f.node_mut(node).copy_from_slice(mat);
        }
        f
    }

    pub fn from_data(nodes: usize, rank: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != nodes * rank * rank {
            return Err(NhymError::Shape(format!(
                "end field data length {} does not match {nodes} nodes of rank {rank}",
                data.len()
            )));
        }
        Ok(Self { rank, nodes, data })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn node(&self, idx: usize) -> &[Complex64] {
        let rr = self.rank * self.rank;
        &self.data[idx * rr..(idx + 1) * rr]
    }

    pub fn node_mut(&mut self, idx: usize) -> &mut [Complex64] {
        let rr = self.rank * self.rank;
        &mut self.data[idx * rr..(idx + 1) * rr]
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let data = self.data.iter().map(|v| v * factor).collect();
        Self { rank: self.rank, nodes: self.nodes, data }
    }

    pub fn scale_re(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        debug_assert_eq!(self.rank, other.rank);
        debug_assert_eq!(self.nodes, other.nodes);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self { rank: self.rank, nodes: self.nodes, data }
    }

    /// Pointwise matrix product.
    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.rank, other.rank);
        let r = self.rank;
        let mut out = Self::zeros(self.nodes, r);
        for node in 0..self.nodes {
            matrix::mul_into(self.node(node), other.node(node), out.node_mut(node), r);
        }
        out
    }

    /// Pointwise commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        let mut ab = self.matmul(other);
        let ba = other.matmul(self);
        ab.sub_assign(&ba);
        ab
    }

    /// Pointwise conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let r = self.rank;
        let mut out = Self::zeros(self.nodes, r);
        for node in 0..self.nodes {
            matrix::adjoint_into(self.node(node), out.node_mut(node), r);
        }
        out
    }

    /// Pointwise Hermitian part.
    pub fn hermitize(&self) -> Self {
        let adj = self.adjoint();
        self.add(&adj).scale_re(0.5)
    }

    /// `H^-1 self^* H`, the adjoint with respect to a metric.
    pub fn h_adjoint(&self, h: &MetricField, h_inv: &EndField) -> Self {
        let adj = self.adjoint();
        h_inv.matmul(&adj).matmul(&h.end)
    }

    pub fn trace_field(&self) -> ScalarField {
        (0..self.nodes).map(|node| matrix::trace(self.node(node), self.rank)).collect()
    }

    pub fn sup_frobenius(&self) -> f64 {
        (0..self.nodes).map(|n| matrix::frobenius(self.node(n))).fold(0.0, f64::max)
    }

    /// Pointwise Frobenius norm as a real field.
    pub fn frobenius_field(&self) -> Vec<f64> {
        (0..self.nodes).map(|n| matrix::frobenius(self.node(n))).collect()
    }
}

/// Hermitian positive definite metric on the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub end: EndField,
}

impl MetricField {
    pub fn identity(nodes: usize, rank: usize) -> Self {
        Self { end: EndField::identity(nodes, rank) }
    }

    /// Wrap an endomorphism field, checking hermiticity and positivity at
    /// every node.
    pub fn from_end(end: EndField) -> Result<Self> {
        let r = end.rank();
        for node in 0..end.nodes() {
            let m = end.node(node);
            let herm_defect: f64 = (0..r)
                .flat_map(|i| (0..r).map(move |j| (i, j)))
                .map(|(i, j)| (m[i * r + j] - m[j * r + i].conj()).norm())
                .fold(0.0, f64::max);
            let scale = matrix::frobenius(m).max(1e-300);
            if herm_defect > 1e-9 * scale {
                return Err(NhymError::Validation(format!(
                    "metric not Hermitian at node {node} (defect {herm_defect:.3e})"
                )));
            }
            let (vals, _) = matrix::hermitian_eigen(m, r)?;
            if vals[0] <= 0.0 {
                return Err(NhymError::NotPositiveDefinite { size: r, eigenvalue: vals[0] });
            }
        }
        Ok(Self { end })
    }

    pub fn rank(&self) -> usize {
        self.end.rank()
    }

    pub fn nodes(&self) -> usize {
        self.end.nodes()
    }

    pub fn node(&self, idx: usize) -> &[Complex64] {
        self.end.node(idx)
    }

    pub fn inverse(&self) -> Result<EndField> {
        let r = self.rank();
        let mut out = EndField::zeros(self.nodes(), r);
        for node in 0..self.nodes() {
            let inv = matrix::inverse(self.node(node), r)?;
            out.node_mut(node).copy_from_slice(&inv);
        }
        Ok(out)
    }

    /// Conformal rescale `exp(2u) H` by a real scalar field.
    pub fn conformal_scale(&self, u: &[f64]) -> Self {
        debug_assert_eq!(u.len(), self.nodes());
        let rr = self.rank() * self.rank();
        let mut end = self.end.clone();
        for (node, &uu) in u.iter().enumerate() {
            let factor = (2.0 * uu).exp();
            for v in &mut end.data[node * rr..(node + 1) * rr] {
                *v *= factor;
            }
        }
        Self { end }
    }

    /// True when every node is exactly the identity matrix.
    pub fn is_identity(&self) -> bool {
        let r = self.rank();
        for node in 0..self.nodes() {
            let m = self.node(node);
            for i in 0..r {
                for j in 0..r {
                    let want = if i == j { 1.0 } else { 0.0 };
                    if m[i * r + j] != Complex64::new(want, 0.0) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Pointwise `log det H` (real for a positive metric).
    pub fn log_det(&self) -> Result<Vec<f64>> {
        let r = self.rank();
        let mut out = Vec::with_capacity(self.nodes());
        for node in 0..self.nodes() {
            let (vals, _) = matrix::hermitian_eigen(self.node(node), r)?;
            if vals[0] <= 0.0 {
                return Err(NhymError::NotPositiveDefinite { size: r, eigenvalue: vals[0] });
            }
            out.push(vals.iter().map(|v| v.ln()).sum());
        }
        Ok(out)
    }
}

/// `K exp(s)` for a `K`-self-adjoint `s`; exactly Hermitian positive by
/// construction (computed as `K^{1/2} exp(K^{1/2} s K^{-1/2}) K^{1/2}`).
pub fn metric_exp(k: &MetricField, s: &EndField) -> Result<MetricField> {
    let r = k.rank();
    let nodes = k.nodes();
    debug_assert_eq!(s.rank(), r);
    let mut out = EndField::zeros(nodes, r);
    if k.is_identity() {
        for node in 0..nodes {
            let m = matrix::hermitize(s.node(node), r);
            let e = matrix::exp_hermitian(&m, r)?;
            out.node_mut(node).copy_from_slice(&e);
        }
    } else {
        for node in 0..nodes {
            let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
            let m = matrix::hermitize(&matrix::mul(&matrix::mul(&ks, s.node(node), r), &kis, r), r);
            let e = matrix::exp_hermitian(&m, r)?;
            let h = matrix::mul(&matrix::mul(&ks, &e, r), &ks, r);
            out.node_mut(node).copy_from_slice(&h);
        }
    }
    Ok(MetricField { end: out })
}

/// The `K`-self-adjoint logarithm `s` with `H = K exp(s)`.
pub fn metric_log(k: &MetricField, h: &MetricField) -> Result<EndField> {
    let r = k.rank();
    let nodes = k.nodes();
    let mut out = EndField::zeros(nodes, r);
    if k.is_identity() {
        for node in 0..nodes {
            let m = matrix::hermitize(h.node(node), r);
            let l = matrix::log_hermitian_pd(&m, r)?;
            out.node_mut(node).copy_from_slice(&l);
        }
    } else {
        for node in 0..nodes {
            let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
            let m = matrix::hermitize(&matrix::mul(&matrix::mul(&kis, h.node(node), r), &kis, r), r);
            let l = matrix::log_hermitian_pd(&m, r)?;
            let s = matrix::mul(&matrix::mul(&kis, &l, r), &ks, r);
            out.node_mut(node).copy_from_slice(&s);
        }
    }
    Ok(out)
}

/// Entrywise rescale of `v` in the pointwise `K`-orthonormal eigenbasis of a
/// `K`-self-adjoint `s`.
///
/// At each node the eigenvalues of `s` are sorted ascending; the matrix of `v`
/// in that eigenframe has entry `(row, col)` multiplied by
/// `kernel(lambda_row, lambda_col)` and is transformed back.
pub fn kernel_apply(
    v: &EndField,
    s: &EndField,
    k: &MetricField,
    kernel: &dyn Fn(f64, f64) -> f64,
) -> Result<EndField> {
    let r = k.rank();
    let nodes = k.nodes();
    let identity = k.is_identity();
    let mut out = EndField::zeros(nodes, r);
    for node in 0..nodes {
        let (vals, u, ks, kis) = if identity {
            let m = matrix::hermitize(s.node(node), r);
            let (vals, u) = matrix::hermitian_eigen(&m, r)?;
            (vals, u, None, None)
        } else {
            let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
            let m = matrix::hermitize(&matrix::mul(&matrix::mul(&ks, s.node(node), r), &kis, r), r);
            let (vals, u) = matrix::hermitian_eigen(&m, r)?;
            (vals, u, Some(ks), Some(kis))
        };
        let ut = matrix::adjoint(&u, r);
        // transform v into the eigenframe
        let mut t = match (&ks, &kis) {
            (Some(ks), Some(kis)) => {
                let inner = matrix::mul(&matrix::mul(ks, v.node(node), r), kis, r);
                matrix::mul(&matrix::mul(&ut, &inner, r), &u, r)
            }
            _ => matrix::mul(&matrix::mul(&ut, v.node(node), r), &u, r),
        };
        for row in 0..r {
            for col in 0..r {
                t[row * r + col] *= kernel(vals[row], vals[col]);
            }
        }
        let back = match (&ks, &kis) {
            (Some(ks), Some(kis)) => {
                let inner = matrix::mul(&matrix::mul(&u, &t, r), &ut, r);
                matrix::mul(&matrix::mul(kis, &inner, r), ks, r)
            }
            _ => matrix::mul(&matrix::mul(&u, &t, r), &ut, r),
        };
        out.node_mut(node).copy_from_slice(&back);
    }
    Ok(out)
}

/// `K`-orthogonal projector onto the span of the lowest `cut + 1` eigenvectors
/// of a `K`-self-adjoint field `u`, node by node.
///
/// Fails with [`NhymError::GapCollapse`] when the spectral gap above the cut
/// drops below `min_gap` anywhere; the sorted-band construction is only well
/// defined while that gap stays open.
pub fn spectral_projector(
    u: &EndField,
    k: &MetricField,
    cut: usize,
    min_gap: f64,
) -> Result<EndField> {
    let r = k.rank();
    let nodes = k.nodes();
    if cut + 1 >= r {
        return Err(NhymError::InvalidProjector(format!(
            "cut {cut} leaves no complement in rank {r}"
        )));
    }
    let identity = k.is_identity();
    let mut out = EndField::zeros(nodes, r);
    for node in 0..nodes {
        let (vals, vecs, ks, kis) = if identity {
            let m = matrix::hermitize(u.node(node), r);
            let (vals, vecs) = matrix::hermitian_eigen(&m, r)?;
            (vals, vecs, None, None)
        } else {
            let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
            let m = matrix::hermitize(&matrix::mul(&matrix::mul(&ks, u.node(node), r), &kis, r), r);
            let (vals, vecs) = matrix::hermitian_eigen(&m, r)?;
            (vals, vecs, Some(ks), Some(kis))
        };
        let gap = vals[cut + 1] - vals[cut];
        if gap < min_gap {
            return Err(NhymError::GapCollapse { gap, min_gap, node });
        }
        // orthogonal projector in the K-unitary frame, then conjugate back:
        // pi = K^{-1/2} (sum_a w_a w_a^*) K^{1/2}
        let mut p = vec![Complex64::default(); r * r];
        for a in 0..=cut {
            for i in 0..r {
                for j in 0..r {
                    p[i * r + j] += vecs[i * r + a] * vecs[j * r + a].conj();
                }
            }
        }
        let pi = match (&ks, &kis) {
            (Some(ks), Some(kis)) => matrix::mul(&matrix::mul(kis, &p, r), ks, r),
            _ => p,
        };
        out.node_mut(node).copy_from_slice(&pi);
    }
    Ok(out)
}

/// Pointwise metric inner product `tr(x H^-1 y^* H)` of two endomorphisms.
pub fn h_inner_node(
    x: &[Complex64],
    y: &[Complex64],
    h: &[Complex64],
    h_inv: &[Complex64],
    r: usize,
) -> Complex64 {
    // tr(x h_inv y^* h)
    let yt = matrix::adjoint(y, r);
    let a = matrix::mul(x, h_inv, r);
    let b = matrix::mul(&yt, h, r);
    let mut acc = Complex64::default();
    for i in 0..r {
        for k in 0..r {
            acc += a[i * r + k] * b[k * r + i];
        }
    }
    acc
}

pub fn h_norm_sq_node(x: &[Complex64], h: &[Complex64], h_inv: &[Complex64], r: usize) -> f64 {
    h_inner_node(x, x, h, h_inv, r).re
}

/// Pointwise squared metric norm of an endomorphism field.
pub fn end_h_norm_sq(x: &EndField, h: &MetricField, h_inv: &EndField) -> Vec<f64> {
    let r = x.rank();
    (0..x.nodes())
        .map(|n| h_norm_sq_node(x.node(n), h.node(n), h_inv.node(n), r))
        .collect()
}

/// One-form with endomorphism coefficients: `sum_j a_j dz_j + b_j dzbar_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub dz: Vec<EndField>,
    pub dzbar: Vec<EndField>,
}

impl OneForm {
    pub fn zeros(n: usize, nodes: usize, rank: usize) -> Self {
        Self {
            dz: (0..n).map(|_| EndField::zeros(nodes, rank)).collect(),
            dzbar: (0..n).map(|_| EndField::zeros(nodes, rank)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.dz.len()
    }

    pub fn rank(&self) -> usize {
        self.dz[0].rank()
    }

    pub fn nodes(&self) -> usize {
        self.dz[0].nodes()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, EndField::add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, EndField::sub)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dz: self.dz.iter().map(|f| f.scale(factor)).collect(),
            dzbar: self.dzbar.iter().map(|f| f.scale(factor)).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(&EndField, &EndField) -> EndField) -> Self {
        Self {
            dz: self.dz.iter().zip(&other.dz).map(|(a, b)| f(a, b)).collect(),
            dzbar: self.dzbar.iter().zip(&other.dzbar).map(|(a, b)| f(a, b)).collect(),
        }
    }

    /// Form adjoint: coefficients conjugated by the metric, `dz <-> dzbar`.
    pub fn h_adjoint(&self, h: &MetricField, h_inv: &EndField) -> Self {
        Self {
            dz: self.dzbar.iter().map(|f| f.h_adjoint(h, h_inv)).collect(),
            dzbar: self.dz.iter().map(|f| f.h_adjoint(h, h_inv)).collect(),
        }
    }

    /// Componentwise left multiplication `m * self`.
    pub fn premul(&self, m: &EndField) -> Self {
        Self {
            dz: self.dz.iter().map(|f| m.matmul(f)).collect(),
            dzbar: self.dzbar.iter().map(|f| m.matmul(f)).collect(),
        }
    }

    /// Componentwise two-sided product `l * self * r`.
    pub fn sandwich(&self, l: &EndField, r: &EndField) -> Self {
        Self {
            dz: self.dz.iter().map(|f| l.matmul(f).matmul(r)).collect(),
            dzbar: self.dzbar.iter().map(|f| l.matmul(f).matmul(r)).collect(),
        }
    }

    /// Componentwise commutator with a zero-form: `[self, m]`.
    pub fn commutator_with(&self, m: &EndField) -> Self {
        Self {
            dz: self.dz.iter().map(|f| f.commutator(m)).collect(),
            dzbar: self.dzbar.iter().map(|f| f.commutator(m)).collect(),
        }
    }

    pub fn sup_frobenius(&self) -> f64 {
        self.dz
            .iter()
            .chain(&self.dzbar)
            .map(EndField::sup_frobenius)
            .fold(0.0, f64::max)
    }
}

/// Pointwise squared norm `2 sum_j (|a_j|_H^2 + |b_j|_H^2)`.
pub fn one_form_h_norm_sq(a: &OneForm, h: &MetricField, h_inv: &EndField) -> Vec<f64> {
    let r = a.rank();
    let nodes = a.nodes();
    let mut out = vec![0.0; nodes];
    for comp in a.dz.iter().chain(&a.dzbar) {
        for node in 0..nodes {
            out[node] +=
                2.0 * h_norm_sq_node(comp.node(node), h.node(node), h_inv.node(node), r);
        }
    }
    out
}

/// Pointwise inner product of one-forms with the same weights.
pub fn one_form_h_inner(a: &OneForm, b: &OneForm, h: &MetricField, h_inv: &EndField) -> ScalarField {
    let r = a.rank();
    let nodes = a.nodes();
    let mut out = vec![Complex64::default(); nodes];
    for (x, y) in a.dz.iter().zip(&b.dz).chain(a.dzbar.iter().zip(&b.dzbar)) {
        for node in 0..nodes {
            out[node] += 2.0 * h_inner_node(x.node(node), y.node(node), h.node(node), h_inv.node(node), r);
        }
    }
    out
}

/// Index of the unordered pair `(j, k)`, `j < k`, in lexicographic order.
pub fn pair_index(j: usize, k: usize, n: usize) -> usize {
    debug_assert!(j < k && k < n);
    j * (2 * n - j - 1) / 2 + (k - j - 1)
}

/// Two-form with endomorphism coefficients, split by type:
/// `dzdz` holds the `dz_j ^ dz_k` (j < k) parts, `dzdzbar` the full `n x n`
/// grid of `dz_j ^ dzbar_k`, `dzbardzbar` the `dzbar_j ^ dzbar_k` (j < k).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoForm {
    pub n: usize,
    pub dzdz: Vec<EndField>,
    pub dzdzbar: Vec<EndField>,
    pub dzbardzbar: Vec<EndField>,
}

impl TwoForm {
    pub fn zeros(n: usize, nodes: usize, rank: usize) -> Self {
        let pairs = n * (n - 1) / 2;
        Self {
            n,
            dzdz: (0..pairs).map(|_| EndField::zeros(nodes, rank)).collect(),
            dzdzbar: (0..n * n).map(|_| EndField::zeros(nodes, rank)).collect(),
            dzbardzbar: (0..pairs).map(|_| EndField::zeros(nodes, rank)).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.dzdzbar[0].rank()
    }

    pub fn nodes(&self) -> usize {
        self.dzdzbar[0].nodes()
    }

    /// Coefficient of `dz_j ^ dzbar_k`.
    pub fn mixed(&self, j: usize, k: usize) -> &EndField {
        &self.dzdzbar[j * self.n + k]
    }

    pub fn mixed_mut(&mut self, j: usize, k: usize) -> &mut EndField {
        &mut self.dzdzbar[j * self.n + k]
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, EndField::add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, EndField::sub)
    }

    fn zip(&self, other: &Self, f: impl Fn(&EndField, &EndField) -> EndField) -> Self {
        Self {
            n: self.n,
            dzdz: self.dzdz.iter().zip(&other.dzdz).map(|(a, b)| f(a, b)).collect(),
            dzdzbar: self.dzdzbar.iter().zip(&other.dzdzbar).map(|(a, b)| f(a, b)).collect(),
            dzbardzbar: self
                .dzbardzbar
                .iter()
                .zip(&other.dzbardzbar)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn sup_frobenius(&self) -> f64 {
        self.dzdz
            .iter()
            .chain(&self.dzdzbar)
            .chain(&self.dzbardzbar)
            .map(EndField::sup_frobenius)
            .fold(0.0, f64::max)
    }

    /// Componentwise two-sided product `l * self * r`.
    pub fn sandwich(&self, l: &EndField, r: &EndField) -> Self {
        let conj = |fs: &[EndField]| fs.iter().map(|f| l.matmul(f).matmul(r)).collect();
        Self {
            n: self.n,
            dzdz: conj(&self.dzdz),
            dzdzbar: conj(&self.dzdzbar),
            dzbardzbar: conj(&self.dzbardzbar),
        }
    }
}

/// Pointwise squared norm with weight 4 per component.
pub fn two_form_h_norm_sq(t: &TwoForm, h: &MetricField, h_inv: &EndField) -> Vec<f64> {
    let r = t.rank();
    let nodes = t.nodes();
    let mut out = vec![0.0; nodes];
    for comp in t.dzdz.iter().chain(&t.dzdzbar).chain(&t.dzbardzbar) {
        for node in 0..nodes {
            out[node] += 4.0 * h_norm_sq_node(comp.node(node), h.node(node), h_inv.node(node), r);
        }
    }
    out
}

/// Pointwise real inner product of two-forms (weight 4 per component).
pub fn two_form_h_inner_re(t: &TwoForm, s: &TwoForm, h: &MetricField, h_inv: &EndField) -> Vec<f64> {
    let r = t.rank();
    let nodes = t.nodes();
    let mut out = vec![0.0; nodes];
    for (x, y) in t
        .dzdz
        .iter()
        .zip(&s.dzdz)
        .chain(t.dzdzbar.iter().zip(&s.dzdzbar))
        .chain(t.dzbardzbar.iter().zip(&s.dzbardzbar))
    {
        for node in 0..nodes {
            out[node] +=
                4.0 * h_inner_node(x.node(node), y.node(node), h.node(node), h_inv.node(node), r).re;
        }
    }
    out
}

/// Wedge of two one-forms with the component conventions
/// `(a ^ b)_{jk} = a_j b_k - a_k b_j` (like types, j < k) and
/// `(a ^ b)_{j kbar} = a_{z_j} b_{zbar_k} - a_{zbar_k} b_{z_j}`.
pub fn wedge(a: &OneForm, b: &OneForm) -> TwoForm {
    let n = a.n();
    let mut out = TwoForm::zeros(n, a.nodes(), a.rank());
    for j in 0..n {
        for k in j + 1..n {
            let idx = pair_index(j, k, n);
            out.dzdz[idx] = a.dz[j].matmul(&b.dz[k]).sub(&a.dz[k].matmul(&b.dz[j]));
            out.dzbardzbar[idx] =
                a.dzbar[j].matmul(&b.dzbar[k]).sub(&a.dzbar[k].matmul(&b.dzbar[j]));
        }
    }
    for j in 0..n {
        for k in 0..n {
            out.dzdzbar[j * n + k] =
                a.dz[j].matmul(&b.dzbar[k]).sub(&a.dzbar[k].matmul(&b.dz[j]));
        }
    }
    out
}

/// Spectral derivative of every matrix entry of an endomorphism field.
pub fn d_dz(eng: &SpectralEngine, f: &EndField, j: usize) -> EndField {
    transform_entries(f, |entry| eng.dz(entry, j))
}

pub fn d_dzbar(eng: &SpectralEngine, f: &EndField, j: usize) -> EndField {
    transform_entries(f, |entry| eng.dzbar(entry, j))
}

pub fn laplacian_end(eng: &SpectralEngine, f: &EndField) -> EndField {
    transform_entries(f, |entry| eng.laplacian(entry))
}

fn transform_entries(f: &EndField, op: impl Fn(&[Complex64]) -> Vec<Complex64> + Sync) -> EndField {
    let rank = f.rank();
    let nodes = f.nodes();
    let rr = rank * rank;
    let results: Vec<Vec<Complex64>> = (0..rr)
        .into_par_iter()
        .map(|e| {
            let gathered: Vec<Complex64> =
                (0..nodes).map(|node| f.data()[node * rr + e]).collect();
            op(&gathered)
        })
        .collect();
    let mut out = EndField::zeros(nodes, rank);
    for (e, entry) in results.iter().enumerate() {
        for node in 0..nodes {
            out.data_mut()[node * rr + e] = entry[node];
        }
    }
    out
}

/// Plain exterior `dbar` of a one-form (no connection terms).
pub fn dbar_one_form(eng: &SpectralEngine, a: &OneForm) -> TwoForm {
    let n = a.n();
    let mut out = TwoForm::zeros(n, a.nodes(), a.rank());
    // (1,1): dbar(a_j dz_j) = -d_{zbar_k} a_j dz_j ^ dzbar_k
    for j in 0..n {
        for k in 0..n {
            let deriv = d_dzbar(eng, &a.dz[j], k);
            out.mixed_mut(j, k).sub_assign(&deriv);
        }
    }
    // (0,2): d_{zbar_j} b_k - d_{zbar_k} b_j
    for j in 0..n {
        for k in j + 1..n {
            let idx = pair_index(j, k, n);
            let t1 = d_dzbar(eng, &a.dzbar[k], j);
            let t2 = d_dzbar(eng, &a.dzbar[j], k);
            out.dzbardzbar[idx] = t1.sub(&t2);
        }
    }
    out
}

/// Plain exterior `d` (holomorphic part) of a one-form.
pub fn del_one_form(eng: &SpectralEngine, a: &OneForm) -> TwoForm {
    let n = a.n();
    let mut out = TwoForm::zeros(n, a.nodes(), a.rank());
    // (2,0): d_{z_j} a_k - d_{z_k} a_j
    for j in 0..n {
        for k in j + 1..n {
            let idx = pair_index(j, k, n);
            let t1 = d_dz(eng, &a.dz[k], j);
            let t2 = d_dz(eng, &a.dz[j], k);
            out.dzdz[idx] = t1.sub(&t2);
        }
    }
    // (1,1): d(b_k dzbar_k) = d_{z_j} b_k dz_j ^ dzbar_k
    for j in 0..n {
        for k in 0..n {
            let deriv = d_dz(eng, &a.dzbar[k], j);
            out.mixed_mut(j, k).add_assign(&deriv);
        }
    }
    out
}

/// Full exterior derivative of a one-form.
pub fn d_one_form(eng: &SpectralEngine, a: &OneForm) -> TwoForm {
    dbar_one_form(eng, a).add(&del_one_form(eng, a))
}

/// Exterior derivative of a zero-form as a one-form.
pub fn d_end_form(eng: &SpectralEngine, f: &EndField, n: usize) -> OneForm {
    OneForm {
        dz: (0..n).map(|j| d_dz(eng, f, j)).collect(),
        dzbar: (0..n).map(|j| d_dzbar(eng, f, j)).collect(),
    }
}

/// `i Lambda` contraction of a two-form: `2 sum_j t_{j jbar}`.
pub fn lambda_contract(t: &TwoForm) -> EndField {
    let mut out = EndField::zeros(t.nodes(), t.rank());
    for j in 0..t.n {
        out.add_assign(t.mixed(j, j));
    }
    out.scale_re(2.0)
}
