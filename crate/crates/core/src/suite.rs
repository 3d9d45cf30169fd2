//! Self-check suite behind the `check` command.
//!
//! Three stages, each emitting named lines with their own tolerances:
//! calibration (the contracted `d d^c` operator against the analytic
//! Laplacian on plane waves, which pins every sign and normalization at
//! once), the structural identity sweep over the bundled presets with
//! seeded random metrics, and cross-checks of the energy functional
//! against its path integral, cocycle relation, and first variation.
//! Any breached line flips the aggregate flag so callers can exit nonzero.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::connection::check_identities;
use crate::conventions::{ledger_checksum, psi_weight};
use crate::fields::{
    d_end_form, d_one_form, lambda_contract, metric_exp, EndField, MetricField, OneForm,
};
use crate::functionals::{donaldson_closed, first_variation};
use crate::geometry::{Scheme, SpectralEngine, TorusGeometry};
use crate::presets::{build, PresetSpec};
use crate::random;
use crate::Result;

/// Plane-wave agreement between the contracted `d d^c` operator and the
/// analytic Laplacian. Band-limited input makes this pure round-off.
pub const CALIBRATION_TOL: f64 = 1e-10;
/// Sup residual allowed across the structural identity sweep.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Relative slack for the closed-form functional against its Simpson path
/// integral and for the cocycle relation.
pub const FUNCTIONAL_REL_TOL: f64 = 1e-6;
/// Relative slack for the central-difference probe of the first variation
/// (dominated by the O(t^2) stencil error).
pub const VARIATION_REL_TOL: f64 = 1e-5;
/// Relative slack for the diagonal pair with a hand value.
pub const EXACT_PAIR_TOL: f64 = 1e-11;
/// Absolute slack for the frozen kernel sample.
pub const KERNEL_TOL: f64 = 1e-14;
/// Simpson subdivisions for the path comparison.
const PATH_STEPS: usize = 64;

/// Knobs for [`check_suite`]. The defaults keep the run to a few seconds;
/// raising `n2_size` to 32 reproduces the heavier review configuration.
#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Axis size for the one-dimensional stages.
    pub n1_size: usize,
    /// Axis size for the two-dimensional stages.
    pub n2_size: usize,
    /// Random metric pairs drawn per one-dimensional preset.
    pub n1_pairs: usize,
    /// Random metric pairs drawn for the two-dimensional preset.
    pub n2_pairs: usize,
    /// Debug lever: flip the sign of `d^c` inside the calibration stage to
    /// prove the suite catches a wrong convention.
    pub flip_dc: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 0, n1_size: 32, n2_size: 16, n1_pairs: 2, n2_pairs: 1, flip_dc: false }
    }
}

/// One named check: the measured residual, the tolerance it was held to,
/// and whether it passed.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteLine {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Aggregate of every line plus the convention checksum of the binary that
/// produced it; reports from differing conventions must not be compared.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub lines: Vec<SuiteLine>,
    pub ledger_checksum: String,
}

impl SuiteReport {
    fn push(&mut self, name: &'static str, residual: f64, tolerance: f64) {
        let pass = residual.is_finite() && residual <= tolerance;
        self.passed &= pass;
        self.lines.push(SuiteLine { name, residual, tolerance, pass });
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Sup mismatch between the contracted `d d^c` of a plane-wave superposition
/// and its analytic Laplacian. With `flip_dc` the `d^c` convention is
/// negated, which flips the sign of the whole operator and must be caught.
pub fn laplacian_calibration(eng: &SpectralEngine, flip_dc: bool) -> f64 {
    let geo = eng.geometry();
    let axes = geo.axes();
    let tau = std::f64::consts::TAU;

    // A fixed superposition: one wave per axis plus one mixed low mode, so a
    // single pipeline pass exercises every derivative direction.
    let mut modes: Vec<(Vec<i64>, f64, f64)> = Vec::new();
    for a in 0..axes {
        let mut k = vec![0i64; axes];
        k[a] = 1 + (a as i64 % 2);
        modes.push((k, 1.0 / (1.0 + a as f64), 0.37 * (a + 1) as f64));
    }
    let mixed: Vec<i64> =
        (0..axes).map(|a| if a % 2 == 0 { 2 } else { -1 }).collect();
    modes.push((mixed, 0.5, 1.234));

    let nodes = geo.nodes();
    let mut value = EndField::zeros(nodes, 1);
    let mut expect = EndField::zeros(nodes, 1);
    for node in 0..nodes {
        let mut v = 0.0;
        let mut lap = 0.0;
        for (k, amp, phase) in &modes {
            let mut arg = *phase;
            let mut lambda = 0.0;
            for a in 0..axes {
                arg += tau * k[a] as f64 * geo.fraction(node, a);
                let freq = tau * k[a] as f64 / geo.periods()[a];
                lambda += freq * freq;
            }
            v += amp * arg.cos();
            lap -= amp * lambda * arg.cos();
        }
        value.node_mut(node)[0] = Complex64::new(v, 0.0);
        expect.node_mut(node)[0] = Complex64::new(lap, 0.0);
    }

    let n = axes / 2;
    let df = d_end_form(eng, &value, n);
    let sign = if flip_dc { -1.0 } else { 1.0 };
    // d^c on functions: antiholomorphic part minus holomorphic part.
    let dc = OneForm {
        dz: df.dz.iter().map(|c| c.scale_re(-sign)).collect(),
        dzbar: df.dzbar.iter().map(|c| c.scale_re(sign)).collect(),
    };
    let got = lambda_contract(&d_one_form(eng, &dc));
    got.sub(&expect).sup_frobenius()
}

/// Worst identity residual over `pairs` random metric pairs on one preset.
pub fn identity_stage(
    spec: &PresetSpec,
    geo: TorusGeometry,
    pairs: usize,
    max_mode: usize,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let eng = SpectralEngine::new(geo, Scheme::Spectral);
    let built = build(eng.geometry(), spec)?;
    let rank = built.connection.rank();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let h = random::metric(eng.geometry(), rank, max_mode, amplitude, rng)?;
        let k = random::metric(eng.geometry(), rank, max_mode, amplitude, rng)?;
        worst = worst.max(check_identities(&eng, &built.connection, &h, &k)?.max());
    }
    Ok(worst)
}

/// Run every stage and collect the report.
pub fn check_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report =
        SuiteReport { passed: true, lines: Vec::new(), ledger_checksum: ledger_checksum() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // calibration
    let eng1 = SpectralEngine::new(
        TorusGeometry::square(1, opts.n1_size, 1.0)?,
        Scheme::Spectral,
    );
    report.push(
        "laplacian_matches_contracted_ddc_n1",
        laplacian_calibration(&eng1, opts.flip_dc),
        CALIBRATION_TOL,
    );
    let eng2 = SpectralEngine::new(
        TorusGeometry::square(2, opts.n2_size, 1.0)?,
        Scheme::Spectral,
    );
    report.push(
        "laplacian_matches_contracted_ddc_n2",
        laplacian_calibration(&eng2, opts.flip_dc),
        CALIBRATION_TOL,
    );
    report.push(
        "kernel_weight_frozen_sample",
        (psi_weight(0.0, 1.0) - (std::f64::consts::E - 2.0)).abs(),
        KERNEL_TOL,
    );

    // Structural identities over the bundled presets. The change-of-metric
    // lines multiply two random metrics, so the drawn amplitude stays a bit
    // below what a single-metric check could afford at this resolution.
    report.push(
        "identities_nilpotent",
        identity_stage(
            &PresetSpec::Nilpotent,
            TorusGeometry::square(1, opts.n1_size, 1.0)?,
            opts.n1_pairs,
            2,
            0.25,
            &mut rng,
        )?,
        IDENTITY_TOL,
    );
    report.push(
        "identities_nonnormal_simple",
        identity_stage(
            &PresetSpec::NonnormalSimple,
            TorusGeometry::square(1, opts.n1_size, 1.0)?,
            opts.n1_pairs,
            2,
            0.25,
            &mut rng,
        )?,
        IDENTITY_TOL,
    );
    // The metric exponential spreads a mode-1 draw across all mode sums, so
    // the drawable amplitude rises with the Nyquist cutoff: the tail that
    // aliases at mode 8 is already negligible at mode 16.
    let n2_amp = if opts.n2_size >= 32 { 0.35 } else { 0.07 };
    report.push(
        "identities_nonflat_n2",
        identity_stage(
            &PresetSpec::NonflatN2,
            TorusGeometry::square(2, opts.n2_size, 1.0)?,
            opts.n2_pairs,
            1,
            n2_amp,
            &mut rng,
        )?,
        IDENTITY_TOL,
    );

    // energy functional cross-checks on the non-normal constant model
    let conn = build(eng1.geometry(), &PresetSpec::NonnormalSimple)?.connection;
    let nodes = eng1.geometry().nodes();

    let ident = MetricField::identity(nodes, 2);
    let mut diag = EndField::identity(nodes, 2);
    let c = 0.3f64;
    for node in 0..nodes {
        diag.node_mut(node)[0] = Complex64::new(c.exp(), 0.0);
        diag.node_mut(node)[3] = Complex64::new((-c).exp(), 0.0);
    }
    let nil = build(eng1.geometry(), &PresetSpec::Nilpotent)?.connection;
    let got = donaldson_closed(&eng1, &nil, &ident, &MetricField { end: diag })?;
    let want = 2.0 * (2.0 * c).exp() - 2.0;
    report.push(
        "donaldson_exact_diagonal_pair",
        (got - want).abs() / (1.0 + want.abs()),
        EXACT_PAIR_TOL,
    );

    let mk = random::metric(eng1.geometry(), 2, 2, 0.3, &mut rng)?;
    let ml = random::metric(eng1.geometry(), 2, 2, 0.3, &mut rng)?;
    let mm = random::metric(eng1.geometry(), 2, 2, 0.3, &mut rng)?;

    let closed = donaldson_closed(&eng1, &conn, &mk, &ml)?;
    let path = crate::functionals::donaldson_path(&eng1, &conn, &mk, &ml, PATH_STEPS)?;
    report.push(
        "donaldson_closed_matches_path",
        (closed - path).abs() / (1.0 + closed.abs()),
        FUNCTIONAL_REL_TOL,
    );

    let kl = closed;
    let lm = donaldson_closed(&eng1, &conn, &ml, &mm)?;
    let km = donaldson_closed(&eng1, &conn, &mk, &mm)?;
    report.push(
        "donaldson_cocycle",
        (kl + lm - km).abs() / (1.0 + km.abs()),
        FUNCTIONAL_REL_TOL,
    );

    let v = random::hermitian_field(eng1.geometry(), 2, 2, 0.3, &mut rng);
    let t = 1e-4;
    let plus = donaldson_closed(&eng1, &conn, &mk, &metric_exp(&mk, &v.scale_re(t))?)?;
    let minus = donaldson_closed(&eng1, &conn, &mk, &metric_exp(&mk, &v.scale_re(-t))?)?;
    let fv = first_variation(&eng1, &conn, &mk, &v)?;
    report.push(
        "donaldson_first_variation",
        ((plus - minus) / (2.0 * t) - fv).abs() / (1.0 + fv.abs()),
        VARIATION_REL_TOL,
    );

    Ok(report)
}
