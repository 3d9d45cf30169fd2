//! Post-hoc analysis: flow invariant monitors, the parabolic identity
//! residual, blow-up structure extraction and splitting diagnostics.

use num_complex::Complex64;

use crate::connection::{
    covariant_d_zero, curvature_of, metric_geometry, Connection,
};
use crate::error::NhymError;
use crate::fields::{
    d_end_form, dbar_one_form, end_h_norm_sq, lambda_contract, metric_exp, metric_log,
    one_form_h_norm_sq, spectral_projector, two_form_h_inner_re, two_form_h_norm_sq, wedge,
    EndField, MetricField, OneForm,
};
use crate::flow::{Checkpoint, FlowRow};
use crate::geometry::SpectralEngine;
use crate::matrix;
use crate::Result;

/// Rate rows are compared only when the dissipation changed by less than
/// this log ratio between neighbours; otherwise the trapezoid comparison is
/// meaningless (for example across step-size doublings).
const RESOLVED_LOG_RATIO: f64 = 0.3;

/// Expected decrements smaller than this fraction of the functional scale
/// are below the arithmetic resolution of the recorded values and are
/// skipped by the rate check.
const RATE_DECREMENT_FLOOR: f64 = 1e-12;

/// Summary of the conservation-law checks over recorded flow rows.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MonitorReport {
    /// Rows that qualified for the dissipation-rate comparison.
    pub rate_rows: usize,
    /// Worst relative mismatch between the Donaldson decrement and the
    /// trapezoid of the dissipation `Int |Phi|^2`.
    pub rate_max_rel: f64,
    /// Worst determinant drift `sup |tr log_{H_0} H_t|` over rows.
    pub det_res_max: f64,
    /// All rows kept the driver non-increasing (within slack).
    pub monotone: bool,
}

/// Check `dM/dt = -Int |Phi|^2` and the flow invariants on recorded rows.
pub fn monitor_flow(rows: &[FlowRow]) -> MonitorReport {
    let mut rate_rows = 0usize;
    let mut rate_max_rel = 0.0f64;
    let mut det_res_max = 0.0f64;
    let mut monotone = true;
    for row in rows {
        det_res_max = det_res_max.max(row.det_res);
        monotone &= row.phi_monotone;
    }
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ia, ib) = (a.l2_phi * a.l2_phi, b.l2_phi * b.l2_phi);
        let dt = b.t - a.t;
        if dt <= 0.0 || ia <= 0.0 || ib <= 0.0 {
            continue;
        }
        if (ib / ia).ln().abs() > RESOLVED_LOG_RATIO {
            continue;
        }
        let trapezoid = -0.5 * (ia + ib) * dt;
        let scale = 1.0 + a.donaldson.abs().max(b.donaldson.abs());
        if trapezoid.abs() < RATE_DECREMENT_FLOOR * scale {
            continue;
        }
        let got = b.donaldson - a.donaldson;
        let rel = (got - trapezoid).abs() / trapezoid.abs().max(1e-300);
        rate_rows += 1;
        rate_max_rel = rate_max_rel.max(rel);
    }
    MonitorReport { rate_rows, rate_max_rel, det_res_max, monotone }
}

/// Sup-norm residual of the parabolic identity for the skew energy density
/// `e = |psi_H|^2`:
///
/// ```text
///   (d/dt - lap) e = -2 |grad psi|^2 - 4 |psi ^ psi|^2 + 8 <F+, psi ^ psi>
/// ```
///
/// The time derivative is a central difference of two exponential steps of
/// size `dt`, so the residual is second order in `dt` once the grid resolves
/// the fields.
pub fn bochner_residual(
    eng: &SpectralEngine,
    conn: &Connection,
    h: &MetricField,
    dt: f64,
) -> Result<f64> {
    let density = |metric: &MetricField| -> Result<Vec<f64>> {
        let inv = metric.inverse()?;
        let geom = metric_geometry(eng, conn, metric, &inv);
        Ok(one_form_h_norm_sq(&geom.psi, metric, &inv))
    };

    let h_inv = h.inverse()?;
    let geom = metric_geometry(eng, conn, h, &h_inv);

    // central time difference along the flow
    let up = metric_exp(h, &geom.phi.scale_re(dt))?;
    let down = metric_exp(h, &geom.phi.scale_re(-dt))?;
    let e_up = density(&up)?;
    let e_down = density(&down)?;
    let e_mid = one_form_h_norm_sq(&geom.psi, h, &h_inv);

    let e_c: Vec<Complex64> = e_mid.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let lap = eng.laplacian(&e_c);

    // |grad psi|^2: every covariant derivative of every component, weight 4
    let n = conn.n();
    let mut grad_sq = vec![0.0; conn.nodes()];
    for nu_part in [&geom.psi.dz, &geom.psi.dzbar] {
        for comp in nu_part {
            let d = covariant_d_zero(eng, &geom.a_h, comp);
            for mu in d.dz.iter().chain(&d.dzbar) {
                let sq = end_h_norm_sq(mu, h, &h_inv);
                for (acc, v) in grad_sq.iter_mut().zip(sq) {
                    *acc += 4.0 * v;
                }
            }
        }
    }
    let _ = n;

    let pp = wedge(&geom.psi, &geom.psi);
    let pp_sq = two_form_h_norm_sq(&pp, h, &h_inv);
    let f_plus = curvature_of(eng, &geom.a_h).add(&pp);
    let cross = two_form_h_inner_re(&f_plus, &pp, h, &h_inv);

    let mut worst = 0.0f64;
    for node in 0..conn.nodes() {
        let e_dot = (e_up[node] - e_down[node]) / (2.0 * dt);
        let residual = e_dot - lap[node].re + 2.0 * grad_sq[node] + 4.0 * pp_sq[node]
            - 8.0 * cross[node];
        worst = worst.max(residual.abs());
    }
    Ok(worst)
}

/// Per-checkpoint structure extracted near a blow-up.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BlowupCheckpointReport {
    pub fraction: f64,
    pub t: f64,
    /// `L^1` norm of `s = log_{H_0} H_t`, the normalization scale.
    pub scale: f64,
    /// Volume averages of the sorted eigenvalues of `u = s / scale`.
    pub eigen_mean: Vec<f64>,
    /// Spatial standard deviations of those eigenvalues.
    pub eigen_std: Vec<f64>,
    /// Spectral gap above the chosen band.
    pub gap: f64,
    /// Last eigenvalue index inside the projector band.
    pub cut: usize,
    /// `sup |pi^2 - pi|`.
    pub algebra_residual: f64,
    /// `sup |K pi - pi^* K|`.
    pub self_adjoint_residual: f64,
    /// `L^2` norm of `(1 - pi) D pi` under the full connection.
    pub invariance_residual: f64,
    pub projector_rank: usize,
}

#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub checkpoints: Vec<BlowupCheckpointReport>,
    /// Projector extracted at the last checkpoint.
    pub projector: EndField,
}

/// Analyze cached blow-up checkpoints: normalize the logarithm, read off the
/// limiting eigenvalue bands, and extract the invariant subbundle projector.
pub fn blowup_analysis(
    eng: &SpectralEngine,
    conn: &Connection,
    k: &MetricField,
    checkpoints: &[Checkpoint],
    min_gap: f64,
) -> Result<BlowupReport> {
    if checkpoints.is_empty() {
        return Err(NhymError::Validation(
            "blow-up analysis needs at least one checkpoint".into(),
        ));
    }
    let r = conn.rank();
    let nodes = conn.nodes();
    let k_inv = k.inverse()?;
    let identity_base = k.is_identity();
    let mut reports = Vec::new();
    let mut last_projector: Option<EndField> = None;

    for cp in checkpoints {
        let s = metric_log(k, &cp.h)?;
        // K-frame Frobenius magnitude for the scale
        let mut mag = Vec::with_capacity(nodes);
        for node in 0..nodes {
            let v = if identity_base {
                matrix::frobenius(s.node(node))
            } else {
                let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
                matrix::frobenius(&matrix::mul(&matrix::mul(&ks, s.node(node), r), &kis, r))
            };
            mag.push(v);
        }
        let scale = eng.integrate_real(&mag);
        if scale <= 0.0 {
            return Err(NhymError::Validation(
                "blow-up checkpoint has a vanishing logarithm".into(),
            ));
        }
        let u = s.scale_re(1.0 / scale);

        // sorted eigenvalues per node, spatial statistics per index
        // (two-pass variance: the spread is often at rounding level and a
        // one-pass formula would cancel catastrophically)
        let mut per_index = vec![Vec::with_capacity(nodes); r];
        for node in 0..nodes {
            let vals = if identity_base {
                matrix::hermitian_eigen(&matrix::hermitize(u.node(node), r), r)?.0
            } else {
                let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
                let m = matrix::hermitize(
                    &matrix::mul(&matrix::mul(&ks, u.node(node), r), &kis, r),
                    r,
                );
                matrix::hermitian_eigen(&m, r)?.0
            };
            for (i, v) in vals.iter().enumerate() {
                per_index[i].push(*v);
            }
        }
        let eigen_mean: Vec<f64> = per_index
            .iter()
            .map(|vals| vals.iter().sum::<f64>() / nodes as f64)
            .collect();
        let eigen_std: Vec<f64> = per_index
            .iter()
            .zip(&eigen_mean)
            .map(|(vals, &m)| {
                let var =
                    vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nodes as f64;
                var.sqrt()
            })
            .collect();

        // widest gap in the averaged spectrum locates the band split
        let (mut cut, mut gap) = (0usize, f64::NEG_INFINITY);
        for i in 0..r - 1 {
            let g = eigen_mean[i + 1] - eigen_mean[i];
            if g > gap {
                gap = g;
                cut = i;
            }
        }
        if gap < min_gap {
            return Err(NhymError::GapCollapse { gap, min_gap, node: 0 });
        }

        let pi = spectral_projector(&u, k, cut, min_gap)?;
        let algebra_residual = pi.matmul(&pi).sub(&pi).sup_frobenius();
        let self_adjoint_residual = {
            let lhs = k.end.matmul(&pi);
            let rhs = pi.adjoint().matmul(&k.end);
            lhs.sub(&rhs).sup_frobenius()
        };
        let dpi = covariant_d_zero(eng, &conn.form, &pi);
        let complement = EndField::identity(nodes, r).sub(&pi);
        let projected = dpi.premul(&complement);
        let invariance_residual = eng
            .integrate_real(&one_form_h_norm_sq(&projected, k, &k_inv))
            .max(0.0)
            .sqrt();
        let tr_mean = eng.integrate(&pi.trace_field()) / eng.geometry().volume();
        let projector_rank = tr_mean.re.round().max(0.0) as usize;

        reports.push(BlowupCheckpointReport {
            fraction: cp.fraction,
            t: cp.t,
            scale,
            eigen_mean,
            eigen_std,
            gap,
            cut,
            algebra_residual,
            self_adjoint_residual,
            invariance_residual,
            projector_rank,
        });
        last_projector = Some(pi);
    }

    Ok(BlowupReport {
        checkpoints: reports,
        projector: last_projector.expect("nonempty checkpoint list"),
    })
}

/// Residuals of the block decomposition of the pseudo-curvature under a
/// constant projector.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SplittingReport {
    /// Constancy of the projector: `sup |d pi|`.
    pub d_pi_sup: f64,
    /// `L^2` norm of the second fundamental form `beta = pi psi (1 - pi)`.
    pub beta_l2: f64,
    /// Top block: `pi G pi = G_S + beta ^ (beta^c)^{*H}`.
    pub pp_residual: f64,
    /// Bottom block: `(1-pi) G (1-pi) = G_Q - (beta^c)^{*H} ^ beta^c`.
    pub qq_residual: f64,
    /// Off-diagonal block: `pi G (1-pi) = dbar b + W_S ^ b + b ^ W_Q`.
    pub off_residual: f64,
}

const PI_CONSTANCY_TOL: f64 = 1e-8;

/// Evaluate the splitting diagnostics of metric `h` against a constant
/// projector `pi` (for example the one recovered by [`blowup_analysis`]).
pub fn splitting_check(
    eng: &SpectralEngine,
    conn: &Connection,
    h: &MetricField,
    pi: &EndField,
) -> Result<SplittingReport> {
    let nodes = conn.nodes();
    let r = conn.rank();
    let dpi = d_end_form(eng, pi, conn.n());
    let d_pi_sup = dpi.sup_frobenius();
    if d_pi_sup > PI_CONSTANCY_TOL {
        return Err(NhymError::InvalidProjector(format!(
            "projector is not constant: sup |d pi| = {d_pi_sup:.3e}"
        )));
    }
    let idem = pi.matmul(pi).sub(pi).sup_frobenius();
    if idem > 1e-8 {
        return Err(NhymError::InvalidProjector(format!(
            "projector is not idempotent: sup |pi^2 - pi| = {idem:.3e}"
        )));
    }

    let h_inv = h.inverse()?;
    let geom = metric_geometry(eng, conn, h, &h_inv);
    let perp = EndField::identity(nodes, r).sub(pi);

    // second fundamental form and its partner
    let beta = geom.psi.sandwich(pi, &perp);
    let beta_l2 = eng
        .integrate_real(&one_form_h_norm_sq(&beta, h, &h_inv))
        .max(0.0)
        .sqrt();
    let beta_c = OneForm {
        dz: beta.dz.iter().map(|f| f.scale_re(-1.0)).collect(),
        dzbar: beta.dzbar.clone(),
    };
    let beta_c_star = beta_c.h_adjoint(h, &h_inv);

    // restricted operators and their pseudo-curvatures
    let w_s = geom.w.sandwich(pi, pi);
    let w_q = geom.w.sandwich(&perp, &perp);
    let g_s = dbar_one_form(eng, &w_s).add(&wedge(&w_s, &w_s));
    let g_q = dbar_one_form(eng, &w_q).add(&wedge(&w_q, &w_q));

    let g_pp = geom.g.sandwich(pi, pi);
    let pp_residual = g_pp
        .sub(&g_s)
        .sub(&wedge(&beta, &beta_c_star))
        .sup_frobenius();

    let g_qq = geom.g.sandwich(&perp, &perp);
    let qq_residual = g_qq
        .sub(&g_q)
        .add(&wedge(&beta_c_star, &beta_c))
        .sup_frobenius();

    let b = geom.w.sandwich(pi, &perp);
    let g_off = geom.g.sandwich(pi, &perp);
    let off_residual = g_off
        .sub(&dbar_one_form(eng, &b))
        .sub(&wedge(&w_s, &b))
        .sub(&wedge(&b, &w_q))
        .sup_frobenius();

    Ok(SplittingReport { d_pi_sup, beta_l2, pp_residual, qq_residual, off_residual })
}

/// Worst violation of the comparison inequality
/// `lap log(tr h + tr h^-1) >= -4 |i Lambda G_H|_H - 4 |i Lambda G_K|_K`
/// with `h = K^{-1} H`; returns the minimum of LHS minus RHS over the grid
/// (nonnegative up to discretization when the inequality holds).
pub fn comparison_bound_margin(
    eng: &SpectralEngine,
    conn: &Connection,
    h: &MetricField,
    k: &MetricField,
) -> Result<f64> {
    let h_inv = h.inverse()?;
    let k_inv = k.inverse()?;
    let r = conn.rank();
    let nodes = conn.nodes();
    let rel = k_inv.matmul(&h.end);
    let rel_inv = h_inv.matmul(&k.end);
    let mut logdens = vec![Complex64::default(); nodes];
    for node in 0..nodes {
        let tr = matrix::trace(rel.node(node), r).re + matrix::trace(rel_inv.node(node), r).re;
        if tr <= 0.0 {
            return Err(NhymError::Validation("relative metric trace not positive".into()));
        }
        logdens[node] = Complex64::new(tr.ln(), 0.0);
    }
    let lap = eng.laplacian(&logdens);
    let gh = lambda_contract(&metric_geometry(eng, conn, h, &h_inv).g);
    let gk = lambda_contract(&metric_geometry(eng, conn, k, &k_inv).g);
    let gh_n = end_h_norm_sq(&gh, h, &h_inv);
    let gk_n = end_h_norm_sq(&gk, k, &k_inv);
    let mut margin = f64::INFINITY;
    for node in 0..nodes {
        let rhs = -4.0 * gh_n[node].sqrt() - 4.0 * gk_n[node].sqrt();
        margin = margin.min(lap[node].re - rhs);
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, FlowConfig, FlowStatus};
    use crate::geometry::{Scheme, TorusGeometry};
    use crate::presets::{build, PresetSpec};
    use crate::random::BandLimited;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn engine(size: usize) -> SpectralEngine {
        SpectralEngine::new(TorusGeometry::square(1, size, 1.0).unwrap(), Scheme::Spectral)
    }

    /// Band-limited Hermitian perturbation evaluated from the same continuum
    /// field on any grid.
    pub(super) fn seeded_metric(eng: &SpectralEngine, amp: f64, seed: u64) -> MetricField {
        let geo = eng.geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fields: Vec<BandLimited> =
            (0..4).map(|_| BandLimited::random(geo.axes(), 1, amp, &mut rng)).collect();
        let nodes = geo.nodes();
        let mut s = EndField::zeros(nodes, 2);
        let mut frac = vec![0.0; geo.axes()];
        for node in 0..nodes {
            for a in 0..geo.axes() {
                frac[a] = geo.fraction(node, a);
            }
            let d0 = fields[0].eval(&frac);
            let d1 = fields[1].eval(&frac);
            let re = fields[2].eval(&frac);
            let im = fields[3].eval(&frac);
            let m = s.node_mut(node);
            m[0] = Complex64::new(d0, 0.0);
            m[1] = Complex64::new(re, im);
            m[2] = Complex64::new(re, -im);
            m[3] = Complex64::new(d1, 0.0);
        }
        metric_exp(&MetricField::identity(nodes, 2), &s).unwrap()
    }

    #[test]
    fn parabolic_identity_residual_refines_at_second_order() {
        let conn_of = |eng: &SpectralEngine| {
            build(eng.geometry(), &PresetSpec::Nilpotent).unwrap().connection
        };
        let coarse_eng = engine(16);
        let fine_eng = engine(32);
        let h_coarse = seeded_metric(&coarse_eng, 0.4, 31);
        let h_fine = seeded_metric(&fine_eng, 0.4, 31);

        // identity check: with a small step the residual sits near the
        // spatial floor of the grid
        let tiny = bochner_residual(&coarse_eng, &conn_of(&coarse_eng), &h_coarse, 1e-5).unwrap();
        assert!(tiny < 1e-4, "identity residual too large: {tiny}");

        // refinement check: halving dt and doubling the grid divides the
        // residual by about four (central-difference truncation dominates)
        let dt = 1e-3;
        let coarse = bochner_residual(&coarse_eng, &conn_of(&coarse_eng), &h_coarse, dt).unwrap();
        let fine = bochner_residual(&fine_eng, &conn_of(&fine_eng), &h_fine, dt / 2.0).unwrap();
        let ratio = coarse / fine;
        assert!(
            ratio > 2.5 && ratio < 6.0,
            "expected roughly quadratic refinement, got {ratio} ({coarse} / {fine})"
        );
    }

    #[test]
    fn blowup_analysis_recovers_the_nilpotent_line() {
        let eng = engine(8);
        let nodes = eng.geometry().nodes();
        let conn = build(eng.geometry(), &PresetSpec::Nilpotent).unwrap().connection;
        let cfg = FlowConfig {
            t_max: 1e13,
            blowup_threshold: 6.0,
            stride: 200,
            ..FlowConfig::default()
        };
        let out = run(&eng, &conn, MetricField::identity(nodes, 2), &cfg).unwrap();
        assert_eq!(out.status, FlowStatus::Blowup);
        assert_eq!(out.checkpoints.len(), 3);
        let k = out.h0.clone();
        let report = blowup_analysis(&eng, &conn, &k, &out.checkpoints, 0.5).unwrap();
        let last = report.checkpoints.last().unwrap();
        assert_eq!(last.projector_rank, 1);
        assert!(last.algebra_residual < 1e-10);
        assert!(last.self_adjoint_residual < 1e-10);
        assert!(last.invariance_residual < 1e-10);
        for cp in &report.checkpoints {
            for std in &cp.eigen_std {
                assert!(*std < 1e-8, "eigenvalue spread {std}");
            }
        }
        // the projector is the line the connection contracts towards
        let p = report.projector.node(0);
        assert!((p[0].re - 1.0).abs() < 1e-9);
        assert!(p[3].norm() < 1e-9);
    }

    #[test]
    fn splitting_residuals_vanish_for_the_nilpotent_model_at_identity() {
        let eng = engine(8);
        let nodes = eng.geometry().nodes();
        let conn = build(eng.geometry(), &PresetSpec::Nilpotent).unwrap().connection;
        let h = MetricField::identity(nodes, 2);
        let mut pi = EndField::zeros(nodes, 2);
        for node in 0..nodes {
            pi.node_mut(node)[0] = Complex64::new(1.0, 0.0);
        }
        let report = splitting_check(&eng, &conn, &h, &pi).unwrap();
        assert!((report.beta_l2 - 1.0 / 2f64.sqrt()).abs() < 1e-12, "{}", report.beta_l2);
        assert!(report.pp_residual < 1e-12, "pp {}", report.pp_residual);
        assert!(report.qq_residual < 1e-12, "qq {}", report.qq_residual);
        assert!(report.off_residual < 1e-12, "off {}", report.off_residual);
    }

    #[test]
    fn splitting_rejects_varying_projector() {
        let eng = engine(8);
        let geo = eng.geometry();
        let nodes = geo.nodes();
        let conn = build(geo, &PresetSpec::Nilpotent).unwrap().connection;
        let h = MetricField::identity(nodes, 2);
        let mut pi = EndField::zeros(nodes, 2);
        for node in 0..nodes {
            let x = 2.0 * std::f64::consts::PI * geo.fraction(node, 0);
            let c = 0.5 + 0.1 * x.sin();
            pi.node_mut(node)[0] = Complex64::new(c, 0.0);
        }
        match splitting_check(&eng, &conn, &h, &pi) {
            Err(NhymError::InvalidProjector(_)) => {}
            other => panic!("expected invalid projector, got {other:?}"),
        }
    }

    #[test]
    fn split_connection_has_no_second_fundamental_form() {
        let eng = engine(8);
        let nodes = eng.geometry().nodes();
        let spec = PresetSpec::BlockSum {
            first: Box::new(PresetSpec::ScalarCharacter { re: 0.3, im: 0.1 }),
            second: Box::new(PresetSpec::ScalarCharacter { re: -0.2, im: 0.4 }),
        };
        let conn = build(eng.geometry(), &spec).unwrap().connection;
        let h = MetricField::identity(nodes, 2);
        let mut pi = EndField::zeros(nodes, 2);
        for node in 0..nodes {
            pi.node_mut(node)[0] = Complex64::new(1.0, 0.0);
        }
        let report = splitting_check(&eng, &conn, &h, &pi).unwrap();
        assert!(report.beta_l2 < 1e-14);
        assert!(report.pp_residual < 1e-13);
        assert!(report.qq_residual < 1e-13);
        assert!(report.off_residual < 1e-13);
    }

    #[test]
    fn comparison_inequality_margin_is_nonnegative_for_smooth_pairs() {
        let eng = engine(32);
        let conn = build(eng.geometry(), &PresetSpec::Nilpotent).unwrap().connection;
        let h = seeded_metric(&eng, 0.3, 5);
        let k = seeded_metric(&eng, 0.2, 9);
        let margin = comparison_bound_margin(&eng, &conn, &h, &k).unwrap();
        assert!(margin > -1e-8, "inequality violated by {margin}");
    }

    #[test]
    fn monitor_accepts_a_converging_run_and_checks_the_rate() {
        let eng = engine(16);
        let geo = eng.geometry();
        let nodes = geo.nodes();
        // opposite conformal factors on the two summands keep the log of the
        // metric traceless, so the determinant invariant is exact
        let mut s = EndField::zeros(nodes, 2);
        for node in 0..nodes {
            let x = 2.0 * std::f64::consts::PI * geo.fraction(node, 0);
            let u = 0.3 * x.cos();
            let m = s.node_mut(node);
            m[0] = Complex64::new(2.0 * u, 0.0);
            m[3] = Complex64::new(-2.0 * u, 0.0);
        }
        let h0 = metric_exp(&MetricField::identity(nodes, 2), &s).unwrap();
        let spec = PresetSpec::BlockSum {
            first: Box::new(PresetSpec::ScalarCharacter { re: 0.3, im: 0.1 }),
            second: Box::new(PresetSpec::ScalarCharacter { re: -0.2, im: 0.4 }),
        };
        let conn = build(geo, &spec).unwrap().connection;
        let cfg = FlowConfig {
            t_max: 2.0,
            tolerance: 1e-9,
            stride: 5,
            normalize: false,
            doubling_interval: 0,
            ..FlowConfig::default()
        };
        let out = run(&eng, &conn, h0, &cfg).unwrap();
        assert_eq!(out.status, FlowStatus::Converged);
        let report = monitor_flow(&out.rows);
        assert!(report.rate_rows > 10, "only {} resolved rows", report.rate_rows);
        assert!(report.rate_max_rel < 0.01, "rate mismatch {}", report.rate_max_rel);
        assert!(report.det_res_max < 1e-9, "det drift {}", report.det_res_max);
        assert!(report.monotone);
    }
}

