//! The metric heat flow `H^{-1} dH/dt = Phi_H` with adaptive exponential
//! Euler stepping.
//!
//! Each step multiplies `H` by `exp(dt Phi)` through the symmetric splitting
//! `H_new = H^{1/2} exp(dt H^{1/2} Phi H^{-1/2}) H^{1/2}`, which keeps the
//! metric exactly Hermitian positive at every node regardless of step size.
//! Step control is a reject-and-halve rule on `sup |Phi|_H` (the flow is
//! parabolic, so the driver must not grow), with geometric step doubling
//! after a run of clean steps. The doubling is what makes logarithmic
//! blow-up times of order `1e11` reachable in a few thousand steps.

use serde::{Deserialize, Serialize};

use crate::connection::{decompose, phi, Connection};
use crate::error::NhymError;
use crate::fields::{metric_exp, metric_log, one_form_h_norm_sq, EndField, MetricField};
use crate::functionals::{donaldson_closed_from_log, sigma, sigma_pointwise};
use crate::geometry::SpectralEngine;
use crate::matrix;
use crate::Result;
use num_complex::Complex64;

/// Slack for the row-level monotonicity flag, `1e-6 * (1 + sup)`.
const PHI_GROWTH_SLACK: f64 = 1e-6;
/// Relative growth that triggers a step rejection. The exact flow keeps
/// `sup |Phi|` non-increasing, so sustained relative growth signals an
/// unstable step.
const REJECT_GROWTH_REL: f64 = 1e-6;
/// Absolute rejection allowance as a fraction of the convergence tolerance.
/// Grid-scale noise can ratchet up to a small multiple of this allowance
/// between step-size probes, so it must sit well below the tolerance (a
/// fixed absolute allowance would put a floor on how far the flow can
/// converge); conversely, with no absolute allowance the sup of decaying
/// sign-flipping modes wobbles enough to reject stable steps and collapse
/// dt.
const REJECT_ABS_FRACTION: f64 = 0.05;
/// After a rejection the next doubling attempt waits this many times the
/// configured interval, so unstable probes inject noise rarely enough for
/// it to decay in between.
const DOUBLING_BACKOFF: usize = 4;
/// Fraction of the initial step below which a step is accepted regardless,
/// with the event flagged in the result.
const DT_FLOOR_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Integration horizon.
    pub t_max: f64,
    /// Convergence threshold on `sup |Phi|_H`.
    pub tolerance: f64,
    /// Blow-up threshold on `sup |log_{H_0} H_t|`.
    pub blowup_threshold: f64,
    /// Safety factor against the explicit stability limit of the flat heat
    /// operator; the default keeps `dt lambda_max` just under 1.
    pub dt_safety: f64,
    /// Fixed initial step instead of the stability heuristic.
    pub dt_override: Option<f64>,
    /// Upper bound for the doubling schedule.
    pub dt_max: f64,
    /// Accepted steps between recorded rows.
    pub stride: usize,
    /// Conformally project the initial metric so the driver is trace-free.
    pub normalize: bool,
    /// Hard cap on accepted steps.
    pub max_steps: usize,
    /// Clean accepted steps between step-size doublings; 0 disables the
    /// doubling schedule.
    pub doubling_interval: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_max: 10.0,
            tolerance: 1e-8,
            blowup_threshold: 20.0,
            dt_safety: 0.2,
            dt_override: None,
            dt_max: 1e30,
            stride: 10,
            normalize: true,
            max_steps: 2_000_000,
            doubling_interval: 50,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(NhymError::Validation("t_max must be positive and finite".into()));
        }
        if !(self.tolerance > 0.0) || !(self.blowup_threshold > 0.0) {
            return Err(NhymError::Validation(
                "tolerance and blowup_threshold must be positive".into(),
            ));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(NhymError::Validation("dt_safety must lie in (0, 1]".into()));
        }
        if let Some(dt) = self.dt_override {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(NhymError::Validation("dt_override must be positive".into()));
            }
        }
        if self.stride == 0 || self.max_steps == 0 {
            return Err(NhymError::Validation("stride and max_steps must be nonzero".into()));
        }
        Ok(())
    }

    /// Stability-based initial step for a given grid.
    pub fn initial_dt(&self, eng: &SpectralEngine) -> f64 {
        if let Some(dt) = self.dt_override {
            return dt;
        }
        let geo = eng.geometry();
        let h = geo.min_spacing();
        self.dt_safety * h * h / (4.0 * geo.n() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    /// `sup |Phi|` fell below the tolerance.
    Converged,
    /// `sup |log_{H_0} H_t|` crossed the blow-up threshold.
    Blowup,
    /// The horizon was reached first.
    MaxTime,
    /// The step cap was reached first.
    StepLimit,
}

impl FlowStatus {
    /// Process exit code contract: converged 0, blow-up 10, otherwise 20.
    pub fn exit_code(self) -> i32 {
        match self {
            FlowStatus::Converged => 0,
            FlowStatus::Blowup => 10,
            FlowStatus::MaxTime | FlowStatus::StepLimit => 20,
        }
    }
}

/// One recorded monitoring row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub sup_phi: f64,
    pub l2_phi: f64,
    pub donaldson: f64,
    pub energy: f64,
    pub sigma0: f64,
    pub s_sup: f64,
    pub s_l1: f64,
    pub det_res: f64,
    pub phi_monotone: bool,
}

/// Metric snapshot cached when `sup |s|` first crosses a fraction of the
/// blow-up threshold.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub fraction: f64,
    pub t: f64,
    pub h: MetricField,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub status: FlowStatus,
    pub t_end: f64,
    pub steps: usize,
    pub rows: Vec<FlowRow>,
    pub final_h: MetricField,
    /// Initial metric after optional normalization; rows measure against it.
    pub h0: MetricField,
    pub checkpoints: Vec<Checkpoint>,
    pub dt_floor_hit: bool,
}

/// Conformal projection making the initial driver trace-free:
/// `H -> exp(2u) H` with `u` solving `2r lap(u) = -(tr Phi - mean)`.
pub fn normalize_initial(
    eng: &SpectralEngine,
    conn: &Connection,
    h: &MetricField,
) -> Result<MetricField> {
    let h_inv = h.inverse()?;
    let p = phi(eng, conn, h, &h_inv);
    let r = conn.rank() as f64;
    let trace: Vec<Complex64> = p
        .trace_field()
        .into_iter()
        .map(|v| -v / (2.0 * r))
        .collect();
    let u: Vec<f64> = eng.poisson(&trace).into_iter().map(|v| v.re).collect();
    Ok(h.conformal_scale(&u))
}

struct FlowState {
    h: MetricField,
    h0: MetricField,
    phi: EndField,
    sup_phi: f64,
    rows: Vec<FlowRow>,
    checkpoints: Vec<Checkpoint>,
    next_fraction: usize,
    blown: bool,
    dt_floor_hit: bool,
    last_row_sup: f64,
}

const CHECKPOINT_FRACTIONS: [f64; 3] = [0.5, 0.75, 1.0];

/// Sup and L2 norms of a zero-form in the metric `h`, as `(sup, l2)`.
pub fn phi_norms(
    eng: &SpectralEngine,
    p: &EndField,
    h: &MetricField,
    h_inv: &EndField,
) -> (f64, f64) {
    let density = crate::fields::end_h_norm_sq(p, h, h_inv);
    let sup = density.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
    let l2 = eng.integrate_real(&density).max(0.0).sqrt();
    (sup, l2)
}

/// Frobenius norm of `s` in a `K`-orthonormal frame, node by node.
fn k_frobenius_sup(s: &EndField, k: &MetricField) -> Result<(f64, Vec<f64>)> {
    let r = s.rank();
    let mut field = Vec::with_capacity(s.nodes());
    let identity = k.is_identity();
    for node in 0..s.nodes() {
        let v = if identity {
            matrix::frobenius(s.node(node))
        } else {
            let (ks, kis) = matrix::sqrt_and_inv_sqrt(k.node(node), r)?;
            matrix::frobenius(&matrix::mul(&matrix::mul(&ks, s.node(node), r), &kis, r))
        };
        field.push(v);
    }
    let sup = field.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok((sup, field))
}

impl FlowState {
    fn new(eng: &SpectralEngine, conn: &Connection, h0: MetricField) -> Result<Self> {
        let h_inv = h0.inverse()?;
        let p = phi(eng, conn, &h0, &h_inv);
        let (sup, _) = phi_norms(eng, &p, &h0, &h_inv);
        Ok(Self {
            h: h0.clone(),
            h0,
            phi: p,
            sup_phi: sup,
            rows: Vec::new(),
            checkpoints: Vec::new(),
            next_fraction: 0,
            blown: false,
            dt_floor_hit: false,
            last_row_sup: sup,
        })
    }

    fn record_row(
        &mut self,
        eng: &SpectralEngine,
        conn: &Connection,
        step: usize,
        t: f64,
        dt: f64,
    ) -> Result<()> {
        let h_inv = self.h.inverse()?;
        let (sup, l2) = phi_norms(eng, &self.phi, &self.h, &h_inv);
        let s = metric_log(&self.h0, &self.h)?;
        let (s_sup, s_field) = k_frobenius_sup(&s, &self.h0)?;
        let s_l1 = eng.integrate_real(&s_field);
        let det_res = s
            .trace_field()
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
        let donaldson = donaldson_closed_from_log(eng, conn, &self.h0, &s)?;
        let dec = decompose(eng, conn, &self.h, &h_inv);
        let energy = eng.integrate_real(&one_form_h_norm_sq(&dec.psi, &self.h, &h_inv));
        let sigma0 = sigma(eng, &self.h0, &self.h)?;
        let monotone = sup <= self.last_row_sup + PHI_GROWTH_SLACK * (1.0 + self.last_row_sup);
        self.rows.push(FlowRow {
            step,
            t,
            dt,
            sup_phi: sup,
            l2_phi: l2,
            donaldson,
            energy,
            sigma0,
            s_sup,
            s_l1,
            det_res,
            phi_monotone: monotone,
        });
        self.last_row_sup = sup;
        Ok(())
    }

    /// Track threshold crossings; returns true when the full threshold was
    /// crossed (blow-up).
    fn update_checkpoints(&mut self, t: f64, threshold: f64) -> Result<bool> {
        if self.next_fraction >= CHECKPOINT_FRACTIONS.len() {
            return Ok(self.blown);
        }
        let s = metric_log(&self.h0, &self.h)?;
        let (s_sup, _) = k_frobenius_sup(&s, &self.h0)?;
        while self.next_fraction < CHECKPOINT_FRACTIONS.len()
            && s_sup >= CHECKPOINT_FRACTIONS[self.next_fraction] * threshold
        {
            self.checkpoints.push(Checkpoint {
                fraction: CHECKPOINT_FRACTIONS[self.next_fraction],
                t,
                h: self.h.clone(),
            });
            self.next_fraction += 1;
        }
        if self.next_fraction == CHECKPOINT_FRACTIONS.len() {
            self.blown = true;
        }
        Ok(self.blown)
    }
}

fn run_lockstep(
    eng: &SpectralEngine,
    conn: &Connection,
    initials: Vec<MetricField>,
    cfg: &FlowConfig,
    mut pair_hook: Option<&mut dyn FnMut(f64, &[FlowState])>,
) -> Result<Vec<FlowResult>> {
    cfg.validate()?;
    let mut states = Vec::with_capacity(initials.len());
    for h in initials {
        let h0 = if cfg.normalize { normalize_initial(eng, conn, &h)? } else { h };
        states.push(FlowState::new(eng, conn, h0)?);
    }
    let dt0 = cfg.initial_dt(eng);
    let dt_floor = dt0 * DT_FLOOR_FACTOR;
    let mut dt = dt0;
    let mut t = 0.0f64;
    let mut steps = 0usize;
    let mut clean = 0usize;
    let mut next_double = cfg.doubling_interval;
    let mut status: Option<FlowStatus> = None;

    for state in states.iter_mut() {
        state.record_row(eng, conn, 0, 0.0, dt)?;
    }
    if let Some(hook) = pair_hook.as_mut() {
        hook(0.0, &states);
    }

    let mut last_recorded_step = 0usize;
    while status.is_none() {
        if states.iter().all(|s| s.sup_phi < cfg.tolerance) {
            status = Some(FlowStatus::Converged);
            break;
        }
        if t >= cfg.t_max * (1.0 - 1e-12) {
            status = Some(FlowStatus::MaxTime);
            break;
        }
        if steps >= cfg.max_steps {
            status = Some(FlowStatus::StepLimit);
            break;
        }
        let dt_use = dt.min(cfg.t_max - t);

        // trial step for every state
        let mut trial = Vec::with_capacity(states.len());
        let mut reject = false;
        for state in &states {
            let h_new = metric_exp(&state.h, &state.phi.scale_re(dt_use))?;
            let h_inv = h_new.inverse()?;
            let p_new = phi(eng, conn, &h_new, &h_inv);
            let (sup_new, _) = phi_norms(eng, &p_new, &h_new, &h_inv);
            let allow = state.sup_phi * (1.0 + REJECT_GROWTH_REL)
                + REJECT_ABS_FRACTION * cfg.tolerance;
            if sup_new > allow {
                reject = true;
            }
            trial.push((h_new, p_new, sup_new));
        }
        if reject && dt_use > dt_floor {
            dt = dt_use / 2.0;
            clean = 0;
            next_double = cfg.doubling_interval.saturating_mul(DOUBLING_BACKOFF);
            continue;
        }
        let floored = reject;
        t += dt_use;
        steps += 1;
        clean += 1;
        let mut blowup = false;
        for (state, (h_new, p_new, sup_new)) in states.iter_mut().zip(trial) {
            state.h = h_new;
            state.phi = p_new;
            state.sup_phi = sup_new;
            state.dt_floor_hit |= floored;
            if state.update_checkpoints(t, cfg.blowup_threshold)? {
                blowup = true;
            }
        }
        if cfg.doubling_interval > 0 && clean >= next_double {
            dt = (dt * 2.0).min(cfg.dt_max);
            clean = 0;
            next_double = cfg.doubling_interval;
        }
        if steps % cfg.stride == 0 || blowup {
            for state in states.iter_mut() {
                state.record_row(eng, conn, steps, t, dt_use)?;
            }
            if let Some(hook) = pair_hook.as_mut() {
                hook(t, &states);
            }
            last_recorded_step = steps;
        }
        if blowup {
            status = Some(FlowStatus::Blowup);
        }
    }

    let status = status.unwrap_or(FlowStatus::MaxTime);
    if last_recorded_step != steps {
        for state in states.iter_mut() {
            state.record_row(eng, conn, steps, t, dt)?;
        }
        if let Some(hook) = pair_hook.as_mut() {
            hook(t, &states);
        }
    }

    Ok(states
        .into_iter()
        .map(|state| {
            let own_status = if state.blown {
                FlowStatus::Blowup
            } else if status == FlowStatus::Blowup {
                // the partner blew up first; this flow simply stopped early
                FlowStatus::MaxTime
            } else if status == FlowStatus::Converged && state.sup_phi >= cfg.tolerance {
                FlowStatus::MaxTime
            } else {
                status
            };
            FlowResult {
                status: own_status,
                t_end: t,
                steps,
                rows: state.rows,
                final_h: state.h,
                h0: state.h0,
                checkpoints: state.checkpoints,
                dt_floor_hit: state.dt_floor_hit,
            }
        })
        .collect())
}

/// Run the flow from one initial metric.
pub fn run(
    eng: &SpectralEngine,
    conn: &Connection,
    h0: MetricField,
    cfg: &FlowConfig,
) -> Result<FlowResult> {
    let mut results = run_lockstep(eng, conn, vec![h0], cfg, None)?;
    Ok(results.pop().expect("one state in, one result out"))
}

#[derive(Debug, Clone)]
pub struct PairResult {
    pub first: FlowResult,
    pub second: FlowResult,
    /// `(t, sup_x sigma(H_t(x), K_t(x)))` on the row schedule; the pointwise
    /// comparison distance between the two lockstepped flows. The sup is the
    /// quantity the two-solution maximum principle controls.
    pub sigma_rows: Vec<(f64, f64)>,
}

/// Run two flows in lockstep (shared step size, joint reject) so their
/// comparison functional is sampled at identical times.
pub fn run_pair(
    eng: &SpectralEngine,
    conn: &Connection,
    h0: MetricField,
    k0: MetricField,
    cfg: &FlowConfig,
) -> Result<PairResult> {
    let mut sigma_rows: Vec<(f64, f64)> = Vec::new();
    let mut failure: Option<NhymError> = None;
    let results = {
        let mut hook = |t: f64, states: &[FlowState]| {
            if failure.is_some() {
                return;
            }
            match sigma_pointwise(&states[0].h, &states[1].h) {
                Ok(v) => {
                    let sup = v.into_iter().fold(0.0f64, f64::max);
                    sigma_rows.push((t, sup));
                }
                Err(e) => failure = Some(e),
            }
        };
        run_lockstep(eng, conn, vec![h0, k0], cfg, Some(&mut hook))?
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let mut iter = results.into_iter();
    let first = iter.next().expect("two states in");
    let second = iter.next().expect("two states in");
    Ok(PairResult { first, second, sigma_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Scheme, TorusGeometry};
    use crate::presets::{build, PresetSpec};
    use std::f64::consts::PI;

    fn engine(size: usize) -> SpectralEngine {
        SpectralEngine::new(TorusGeometry::square(1, size, 1.0).unwrap(), Scheme::Spectral)
    }

    fn conformal_initial(eng: &SpectralEngine, amp: f64) -> MetricField {
        let geo = eng.geometry();
        let u: Vec<f64> = (0..geo.nodes())
            .map(|node| {
                let x = 2.0 * PI * geo.fraction(node, 0);
                amp * x.cos()
            })
            .collect();
        MetricField::identity(geo.nodes(), 1).conformal_scale(&u)
    }

    #[test]
    fn trivial_flow_is_the_heat_semigroup() {
        // A = 0, H = exp(2u): u obeys the plain heat equation, so a single
        // mode decays like exp(-4 pi^2 t)
        let eng = engine(16);
        let geo = eng.geometry();
        let amp = 0.3;
        let h0 = conformal_initial(&eng, amp);
        let conn = build(geo, &PresetSpec::ScalarCharacter { re: 0.0, im: 0.0 })
            .unwrap()
            .connection;
        let t_max = 0.05;
        let cfg = FlowConfig {
            t_max,
            tolerance: 1e-14,
            normalize: false,
            stride: 100,
            doubling_interval: 0,
            ..FlowConfig::default()
        };
        let decay = (-4.0 * PI * PI * t_max).exp();
        let sup_err = |out: &FlowResult| -> f64 {
            (0..geo.nodes())
                .map(|node| {
                    let x = 2.0 * PI * geo.fraction(node, 0);
                    let want = (2.0 * amp * decay * x.cos()).exp();
                    (out.final_h.node(node)[0].re - want).abs()
                })
                .fold(0.0, f64::max)
        };
        let coarse = run(&eng, &conn, h0.clone(), &cfg).unwrap();
        assert_eq!(coarse.status, FlowStatus::MaxTime);
        let err_coarse = sup_err(&coarse);
        assert!(err_coarse < 5e-3, "error {err_coarse}");
        // halving the step should halve the error (first-order stepping)
        let fine_cfg = FlowConfig {
            dt_override: Some(cfg.initial_dt(&eng) / 2.0),
            ..cfg.clone()
        };
        let fine = run(&eng, &conn, h0, &fine_cfg).unwrap();
        let err_fine = sup_err(&fine);
        let ratio = err_coarse / err_fine;
        assert!(
            (1.6..2.4).contains(&ratio),
            "expected first-order convergence, got ratio {ratio} ({err_coarse} / {err_fine})"
        );
    }

    #[test]
    fn oversized_step_request_is_tamed_by_rejection() {
        let eng = engine(16);
        let h0 = conformal_initial(&eng, 0.4);
        let conn = build(eng.geometry(), &PresetSpec::ScalarCharacter { re: 0.0, im: 0.0 })
            .unwrap()
            .connection;
        let stable = FlowConfig::default().initial_dt(&eng);
        let cfg = FlowConfig {
            t_max: 1.0,
            tolerance: 1e-9,
            dt_override: Some(stable * 64.0),
            normalize: false,
            ..FlowConfig::default()
        };
        let out = run(&eng, &conn, h0, &cfg).unwrap();
        assert_eq!(out.status, FlowStatus::Converged);
        assert!(!out.dt_floor_hit);
        // the recorded steps show a dt below the requested one
        assert!(out.rows.iter().any(|r| r.dt < stable * 64.0));
    }

    #[test]
    fn nilpotent_flow_tracks_the_logarithmic_orbit() {
        // s(t) = diag(-c, c) with c = ln(1 + 4t) / 2
        let eng = engine(8);
        let nodes = eng.geometry().nodes();
        let conn = build(eng.geometry(), &PresetSpec::Nilpotent).unwrap().connection;
        let cfg = FlowConfig {
            t_max: 2.0,
            tolerance: 1e-12,
            stride: 50,
            ..FlowConfig::default()
        };
        let out = run(&eng, &conn, MetricField::identity(nodes, 2), &cfg).unwrap();
        assert_eq!(out.status, FlowStatus::MaxTime);
        let c = (1.0 + 4.0 * out.t_end).ln() / 2.0;
        let h = out.final_h.node(0);
        assert!((h[0].re - (-c).exp()).abs() < 2e-3, "{} vs {}", h[0].re, (-c).exp());
        assert!((h[3].re - c.exp()).abs() < 2e-2);
        // determinant exactly preserved and rows monotone
        let last = out.rows.last().unwrap();
        assert!(last.det_res < 1e-10, "det residual {}", last.det_res);
        assert!(out.rows.iter().all(|r| r.phi_monotone));
        // step doubling costs some accuracy; the drift is first order in the
        // local ratio dt / t and stays near 1e-3 on this schedule
        assert!((last.s_sup - c * 2f64.sqrt()).abs() < 1e-2);
    }

    #[test]
    fn character_flow_converges_to_the_mean_conformal_factor() {
        let eng = engine(16);
        let geo = eng.geometry();
        let amp = 0.25;
        let h0 = conformal_initial(&eng, amp);
        let conn = build(geo, &PresetSpec::ScalarCharacter { re: 0.4, im: -0.2 })
            .unwrap()
            .connection;
        let cfg = FlowConfig { t_max: 20.0, tolerance: 1e-10, ..FlowConfig::default() };
        let out = run(&eng, &conn, h0, &cfg).unwrap();
        assert_eq!(out.status, FlowStatus::Converged);
        // cos mode has zero mean, so the limit is the identity metric
        for node in 0..geo.nodes() {
            assert!((out.final_h.node(node)[0].re - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_makes_the_driver_trace_free() {
        // the residual is set by the aliasing tail of exp(2u); at this
        // resolution and amplitude that tail sits far below the bound
        let eng = engine(64);
        let geo = eng.geometry();
        let built = build(geo, &PresetSpec::ScalarExact { max_mode: 2, amplitude: 0.35, seed: 4 })
            .unwrap();
        let h0 = MetricField::identity(geo.nodes(), 1);
        let normalized = normalize_initial(&eng, &built.connection, &h0).unwrap();
        let h_inv = normalized.inverse().unwrap();
        let p = phi(&eng, &built.connection, &normalized, &h_inv);
        let worst = p
            .trace_field()
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-10, "trace of driver after normalization: {worst}");
    }

    #[test]
    fn paired_flows_share_the_clock_and_contract() {
        let eng = engine(16);
        let h0 = conformal_initial(&eng, 0.3);
        let k0 = conformal_initial(&eng, -0.2);
        let conn = build(eng.geometry(), &PresetSpec::ScalarCharacter { re: 0.0, im: 0.3 })
            .unwrap()
            .connection;
        let cfg = FlowConfig {
            t_max: 5.0,
            tolerance: 1e-10,
            normalize: false,
            ..FlowConfig::default()
        };
        let pair = run_pair(&eng, &conn, h0, k0, &cfg).unwrap();
        assert_eq!(pair.first.status, FlowStatus::Converged);
        assert_eq!(pair.second.status, FlowStatus::Converged);
        assert!(pair.sigma_rows.len() >= 3);
        for win in pair.sigma_rows.windows(2) {
            assert!(
                win[1].1 <= win[0].1 + 1e-6 * (1.0 + win[0].1),
                "sigma grew: {} -> {}",
                win[0].1,
                win[1].1
            );
        }
    }
}
