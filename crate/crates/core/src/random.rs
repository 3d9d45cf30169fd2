//! Seeded band-limited random fields.
//!
//! Fields are stored as explicit Fourier mode sums and evaluated pointwise,
//! so the same seed describes the same continuum field on every grid
//! resolution. That property is what the refinement studies lean on: coarse
//! and fine grids sample one function instead of one noise realization per
//! grid.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fields::{metric_exp, EndField, MetricField};
use crate::geometry::TorusGeometry;
use crate::Result;

/// Real trigonometric polynomial `sum_m a_m cos(2 pi m . x + theta_m)` with
/// `|m|_inf <= max_mode` over the canonical half of the mode lattice.
#[derive(Debug, Clone)]
pub struct BandLimited {
    axes: usize,
    modes: Vec<Mode>,
}

#[derive(Debug, Clone)]
struct Mode {
    k: Vec<i64>,
    amp: f64,
    phase: f64,
}

/// Iterate the canonical half lattice: lexicographic order over
/// `[-max, max]^d`, keeping vectors whose first nonzero entry is positive.
fn half_lattice(d: usize, max: i64) -> Vec<Vec<i64>> {
    let width = (2 * max + 1) as usize;
    let total = width.pow(d as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut m = vec![0i64; d];
        let mut rest = flat;
        for slot in (0..d).rev() {
            m[slot] = (rest % width) as i64 - max;
            rest /= width;
        }
        match m.iter().find(|&&v| v != 0) {
            Some(&lead) if lead > 0 => out.push(m),
            _ => {}
        }
    }
    out
}

impl BandLimited {
    /// Draw amplitudes and phases for every canonical mode. Amplitudes decay
    /// as `1 / (1 + |m|^2)` so derivatives stay tame.
    pub fn random(axes: usize, max_mode: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut modes = Vec::new();
        for k in half_lattice(axes, max_mode as i64) {
            let weight: f64 = 1.0 + k.iter().map(|&v| (v * v) as f64).sum::<f64>();
            let amp = amplitude * rng.random_range(-1.0..1.0) / weight;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            modes.push(Mode { k, amp, phase });
        }
        Self { axes, modes }
    }

    pub fn axes(&self) -> usize {
        self.axes
    }

    /// Value at fractional coordinates in `[0, 1)^d`.
    pub fn eval(&self, frac: &[f64]) -> f64 {
        debug_assert_eq!(frac.len(), self.axes);
        let mut acc = 0.0;
        for mode in &self.modes {
            let arg: f64 = mode
                .k
                .iter()
                .zip(frac)
                .map(|(&m, &x)| m as f64 * x)
                .sum::<f64>()
                * std::f64::consts::TAU
                + mode.phase;
            acc += mode.amp * arg.cos();
        }
        acc
    }

    /// Partial derivative along a real axis, in the coordinate (not
    /// fractional) variable: the period enters through `2 pi m / L`.
    pub fn eval_deriv(&self, frac: &[f64], axis: usize, period: f64) -> f64 {
        let mut acc = 0.0;
        for mode in &self.modes {
            let arg: f64 = mode
                .k
                .iter()
                .zip(frac)
                .map(|(&m, &x)| m as f64 * x)
                .sum::<f64>()
                * std::f64::consts::TAU
                + mode.phase;
            let freq = std::f64::consts::TAU * mode.k[axis] as f64 / period;
            acc -= mode.amp * freq * arg.sin();
        }
        acc
    }

    /// Sample onto a grid.
    pub fn sample(&self, geo: &TorusGeometry) -> Vec<f64> {
        let mut frac = vec![0.0; self.axes];
        (0..geo.nodes())
            .map(|node| {
                for a in 0..self.axes {
                    frac[a] = geo.fraction(node, a);
                }
                self.eval(&frac)
            })
            .collect()
    }
}

/// Random real scalar field sampled on the grid.
pub fn scalar_field(
    geo: &TorusGeometry,
    max_mode: usize,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    BandLimited::random(geo.axes(), max_mode, amplitude, rng).sample(geo)
}

/// Random Hermitian endomorphism field: independent band-limited functions
/// for each real degree of freedom (diagonal entries real, upper triangle
/// complex, lower triangle mirrored).
pub fn hermitian_field(
    geo: &TorusGeometry,
    rank: usize,
    max_mode: usize,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> EndField {
    let nodes = geo.nodes();
    let mut out = EndField::zeros(nodes, rank);
    for i in 0..rank {
        let diag = scalar_field(geo, max_mode, amplitude, rng);
        for node in 0..nodes {
            out.node_mut(node)[i * rank + i] = Complex64::new(diag[node], 0.0);
        }
        for j in i + 1..rank {
            let re = scalar_field(geo, max_mode, amplitude, rng);
            let im = scalar_field(geo, max_mode, amplitude, rng);
            for node in 0..nodes {
                let v = Complex64::new(re[node], im[node]);
                out.node_mut(node)[i * rank + j] = v;
                out.node_mut(node)[j * rank + i] = v.conj();
            }
        }
    }
    out
}

/// Random positive metric `exp` of a random Hermitian field.
pub fn metric(
    geo: &TorusGeometry,
    rank: usize,
    max_mode: usize,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MetricField> {
    let s = hermitian_field(geo, rank, max_mode, amplitude, rng);
    metric_exp(&MetricField::identity(geo.nodes(), rank), &s)
}
