//! Flat torus grids and derivative engines.
//!
//! A torus of complex dimension `n` is sampled on a regular grid with `2n`
//! real axes, ordered `x_1, y_1, x_2, y_2, ...` so that complex coordinate
//! `j` (zero based) owns axes `2j` and `2j + 1`. Fields are stored flat in
//! row-major order with axis 0 slowest.
//!
//! Two derivative schemes are provided. The spectral scheme is the production
//! one: exact on band-limited data up to round-off. The central scheme is a
//! deliberately low-order cross check used by the calibration suite; seeing
//! the expected O(h^2) error decay from an independent discretization is good
//! evidence that the spectral symbols are wired to the right axes.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::NhymError;
use crate::Result;

/// Hard cap on total grid nodes, to keep accidental huge configs from
/// exhausting memory before validation can report anything useful.
pub const MAX_NODES: usize = 1 << 24;

/// Grid geometry of a flat complex torus.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGeometry {
    n: usize,
    sizes: Vec<usize>,
    periods: Vec<f64>,
    strides: Vec<usize>,
    nodes: usize,
}

impl TorusGeometry {
    /// `n` complex dimensions, `sizes[a]` grid points and `periods[a]` side
    /// length for each of the `2n` real axes.
    pub fn new(n: usize, sizes: &[usize], periods: &[f64]) -> Result<Self> {
        if n == 0 || n > 8 {
            return Err(NhymError::Config(format!(
                "complex dimension must be in 1..=8, got {n}"
            )));
        }
        if sizes.len() != 2 * n || periods.len() != 2 * n {
            return Err(NhymError::Config(format!(
                "expected {} axis sizes and periods, got {} and {}",
                2 * n,
                sizes.len(),
                periods.len()
            )));
        }
        for &s in sizes {
            if s < 4 || s % 2 != 0 {
                return Err(NhymError::Config(format!(
                    "axis sizes must be even and at least 4, got {s}"
                )));
            }
        }
        for &p in periods {
            if !(p.is_finite() && p > 0.0) {
                return Err(NhymError::Config(format!("periods must be positive, got {p}")));
            }
        }
        let mut nodes = 1usize;
        for &s in sizes {
            nodes = nodes
                .checked_mul(s)
                .filter(|&v| v <= MAX_NODES)
                .ok_or_else(|| NhymError::Config("grid larger than MAX_NODES".into()))?;
        }
        let mut strides = vec![0usize; 2 * n];
        let mut acc = 1usize;
        for a in (0..2 * n).rev() {
            strides[a] = acc;
            acc *= sizes[a];
        }
        Ok(Self { n, sizes: sizes.to_vec(), periods: periods.to_vec(), strides, nodes })
    }

    /// Square grid shorthand: every axis gets `size` points and period `period`.
    pub fn square(n: usize, size: usize, period: f64) -> Result<Self> {
        Self::new(n, &vec![size; 2 * n], &vec![period; 2 * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn size(&self, axis: usize) -> usize {
        self.sizes[axis]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.periods[axis]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.sizes[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.axes()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Grid index of `node` along `axis`.
    pub fn coord(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.sizes[axis]
    }

    /// Physical coordinate of `node` along `axis`.
    pub fn point(&self, node: usize, axis: usize) -> f64 {
        self.coord(node, axis) as f64 * self.spacing(axis)
    }

    /// Fractional coordinate in [0, 1).
    pub fn fraction(&self, node: usize, axis: usize) -> f64 {
        self.coord(node, axis) as f64 / self.sizes[axis] as f64
    }
}

/// Which derivative discretization an engine uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fourier collocation. First-derivative symbols zero the Nyquist bin;
    /// the Laplacian and Poisson symbols keep it so that
    /// `laplacian(poisson(f)) == f` on arbitrary mean-zero data.
    Spectral,
    /// Second-order centered differences, diagonalized by the same FFT.
    Central,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Spectral
    }
}

/// Derivative, Laplacian, Poisson and integration operators on one grid.
///
/// All operators act entrywise on flat `Complex64` slices of length
/// `geometry().nodes()`. FFT plans and symbol tables are built once at
/// construction.
pub struct SpectralEngine {
    geo: TorusGeometry,
    scheme: Scheme,
    fwd: HashMap<usize, Arc<dyn Fft<f64>>>,
    inv: HashMap<usize, Arc<dyn Fft<f64>>>,
    /// Per complex coordinate: d/dz_j symbol over the full grid.
    tab_dz: Vec<Vec<Complex64>>,
    /// Per complex coordinate: d/dzbar_j symbol.
    tab_dzbar: Vec<Vec<Complex64>>,
    /// Laplacian symbol (real, stored as complex).
    tab_lap: Vec<Complex64>,
    /// Inverse Laplacian symbol with the zero mode projected out.
    tab_poisson: Vec<Complex64>,
}

impl SpectralEngine {
    pub fn new(geo: TorusGeometry, scheme: Scheme) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let mut fwd = HashMap::new();
        let mut inv = HashMap::new();
        for &s in geo.sizes() {
            fwd.entry(s).or_insert_with(|| planner.plan_fft_forward(s));
            inv.entry(s).or_insert_with(|| planner.plan_fft_inverse(s));
        }

        // Effective first-derivative wavenumber and squared Laplacian
        // wavenumber for every (axis, mode) pair.
        let axes = geo.axes();
        let mut k1: Vec<Vec<f64>> = Vec::with_capacity(axes);
        let mut k2: Vec<Vec<f64>> = Vec::with_capacity(axes);
        for a in 0..axes {
            let size = geo.size(a) as i64;
            let length = geo.period(a);
            let h = geo.spacing(a);
            let mut k1a = Vec::with_capacity(size as usize);
            let mut k2a = Vec::with_capacity(size as usize);
            for m in 0..size {
                let signed = if m <= size / 2 { m } else { m - size };
                let k = 2.0 * std::f64::consts::PI * signed as f64 / length;
                match scheme {
                    Scheme::Spectral => {
                        // Nyquist bin: no well-defined sign, drop it from first
                        // derivatives but keep the full k^2 in the Laplacian.
                        let nyquist = m * 2 == size;
                        k1a.push(if nyquist { 0.0 } else { k });
                        k2a.push(k * k);
                    }
                    Scheme::Central => {
                        let theta = 2.0 * std::f64::consts::PI * m as f64 / size as f64;
                        k1a.push(theta.sin() / h);
                        let s = (theta / 2.0).sin();
                        k2a.push(4.0 * s * s / (h * h));
                    }
                }
            }
            k1.push(k1a);
            k2.push(k2a);
        }

        let nodes = geo.nodes();
        let n = geo.n();
        let mut tab_dz = vec![vec![Complex64::default(); nodes]; n];
        let mut tab_dzbar = vec![vec![Complex64::default(); nodes]; n];
        let mut tab_lap = vec![Complex64::default(); nodes];
        let mut tab_poisson = vec![Complex64::default(); nodes];
        for idx in 0..nodes {
            let mut ksq = 0.0;
            for a in 0..axes {
                ksq += k2[a][geo.coord(idx, a)];
            }
            tab_lap[idx] = Complex64::new(-ksq, 0.0);
            tab_poisson[idx] =
                if ksq > 0.0 { Complex64::new(-1.0 / ksq, 0.0) } else { Complex64::default() };
            for j in 0..n {
                let kx = k1[2 * j][geo.coord(idx, 2 * j)];
                let ky = k1[2 * j + 1][geo.coord(idx, 2 * j + 1)];
                // d/dz = (d/dx - i d/dy)/2 -> (i kx + ky)/2 on modes
                tab_dz[j][idx] = Complex64::new(ky / 2.0, kx / 2.0);
                // d/dzbar = (d/dx + i d/dy)/2 -> (i kx - ky)/2
                tab_dzbar[j][idx] = Complex64::new(-ky / 2.0, kx / 2.0);
            }
        }

        Self { geo, scheme, fwd, inv, tab_dz, tab_dzbar, tab_lap, tab_poisson }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geo
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// True when every element is bitwise identical to the first. Constant
    /// fields short-circuit the derivative operators to exact zeros, which
    /// keeps long flows on spatially constant data free of FFT round-off.
    pub fn is_constant(data: &[Complex64]) -> bool {
        match data.first() {
            None => true,
            Some(first) => {
                let (re, im) = (first.re.to_bits(), first.im.to_bits());
                data.iter().all(|v| v.re.to_bits() == re && v.im.to_bits() == im)
            }
        }
    }

    fn fft_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        let size = self.geo.size(axis);
        let stride = self.geo.stride(axis);
        let plan = if forward { &self.fwd[&size] } else { &self.inv[&size] };
        let mut line = vec![Complex64::default(); size];
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let group = size * stride;
        let blocks = data.len() / group;
        for block in 0..blocks {
            let base = block * group;
            for inner in 0..stride {
                let start = base + inner;
                for (m, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + m * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (m, value) in line.iter().enumerate() {
                    data[start + m * stride] = *value;
                }
            }
        }
    }

    fn forward_all(&self, data: &mut [Complex64]) {
        for a in 0..self.geo.axes() {
            self.fft_axis(data, a, true);
        }
    }

    fn inverse_all(&self, data: &mut [Complex64]) {
        for a in 0..self.geo.axes() {
            self.fft_axis(data, a, false);
        }
        let scale = 1.0 / self.geo.nodes() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn apply_table(&self, f: &[Complex64], table: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(f.len(), self.geo.nodes());
        if Self::is_constant(f) && table[0] == Complex64::default() {
            return vec![Complex64::default(); f.len()];
        }
        let mut buf = f.to_vec();
        self.forward_all(&mut buf);
        for (v, s) in buf.iter_mut().zip(table.iter()) {
            *v *= s;
        }
        self.inverse_all(&mut buf);
        buf
    }

    /// Holomorphic derivative along complex coordinate `j`.
    pub fn dz(&self, f: &[Complex64], j: usize) -> Vec<Complex64> {
        self.apply_table(f, &self.tab_dz[j])
    }

    /// Antiholomorphic derivative along complex coordinate `j`.
    pub fn dzbar(&self, f: &[Complex64], j: usize) -> Vec<Complex64> {
        self.apply_table(f, &self.tab_dzbar[j])
    }

    /// Real-axis derivative, mostly for calibration tests.
    pub fn dx(&self, f: &[Complex64], axis: usize) -> Vec<Complex64> {
        let j = axis / 2;
        // d/dx = d/dz + d/dzbar, d/dy = i (d/dz - d/dzbar)
        let a = self.dz(f, j);
        let b = self.dzbar(f, j);
        if axis % 2 == 0 {
            a.iter().zip(&b).map(|(p, q)| p + q).collect()
        } else {
            a.iter().zip(&b).map(|(p, q)| Complex64::i() * (p - q)).collect()
        }
    }

    /// Flat Laplacian (all `2n` real axes).
    pub fn laplacian(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_table(f, &self.tab_lap)
    }

    /// Mean-zero solution `u` of `laplacian(u) = f - mean(f)`.
    pub fn poisson(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_table(f, &self.tab_poisson)
    }

    /// Trapezoid integral over the torus (exact for periodic sampling):
    /// `mean(f) * volume`. Kahan-compensated for reproducible accuracy.
    pub fn integrate(&self, f: &[Complex64]) -> Complex64 {
        let mut sum = Complex64::default();
        let mut carry = Complex64::default();
        for &v in f {
            let y = v - carry;
            let t = sum + y;
            carry = (t - sum) - y;
            sum = t;
        }
        sum * (self.geo.volume() / self.geo.nodes() as f64)
    }

    pub fn integrate_real(&self, f: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut carry = 0.0;
        for &v in f {
            let y = v - carry;
            let t = sum + y;
            carry = (t - sum) - y;
            sum = t;
        }
        sum * (self.geo.volume() / self.geo.nodes() as f64)
    }

    pub fn mean(&self, f: &[Complex64]) -> Complex64 {
        self.integrate(f) / self.geo.volume()
    }
}
