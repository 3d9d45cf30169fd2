//! Experiment orchestration: configuration in, artifacts out.
//!
//! Everything is computed in memory and returned as strings and byte
//! buffers; callers decide where (and whether) to put them on disk. Given
//! the same configuration the artifacts are byte-identical across runs.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{blowup_analysis, monitor_flow, splitting_check};
use crate::config::ExperimentConfig;
use crate::connection::validate_nhym;
use crate::conventions;
use crate::error::NhymError;
use crate::fields::MetricField;
use crate::flow::{run, FlowResult, FlowStatus};
use crate::geometry::{Scheme, SpectralEngine};
use crate::output::{
    series_csv, BlowupSummary, CertificateSummary, OracleSummary, RunSummary,
};
use crate::presets;
use crate::snapshot::Snapshot;
use crate::Result;

/// Residual ceiling for accepting a connection as a valid input model.
const CERTIFICATE_TOL: f64 = 1e-8;

/// Everything an experiment produces.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub summary: RunSummary,
    /// `series.csv` contents.
    pub series: String,
    /// Binary snapshot files as (name, bytes).
    pub snapshots: Vec<(String, Vec<u8>)>,
    /// Full flow result for programmatic consumers.
    pub result: FlowResult,
}

impl Artifacts {
    /// Write `series.csv`, `summary.json` and any snapshots into `dir`,
    /// creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("series.csv"), &self.series)?;
        std::fs::write(dir.join("summary.json"), self.summary.to_json())?;
        for (name, bytes) in &self.snapshots {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Run a configured experiment end to end: build, validate, flow, analyze.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let geo = cfg.geometry.build()?;
    let eng = SpectralEngine::new(geo, Scheme::Spectral);
    let built = presets::build(eng.geometry(), &cfg.connection)?;
    let conn = built.connection;

    let cert = validate_nhym(&eng, &conn);
    let worst = cert.res_f20.max(cert.res_f02).max(cert.res_einstein);
    if worst > CERTIFICATE_TOL {
        return Err(NhymError::Validation(format!(
            "connection fails the model certificate: worst residual {worst:.3e}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h0 = cfg.initial_metric.build(eng.geometry(), conn.rank(), &mut rng)?;

    let result = run(&eng, &conn, h0, &cfg.flow)?;
    let monitor = monitor_flow(&result.rows);

    let mut blowup = None;
    let mut splitting = None;
    if result.status == FlowStatus::Blowup && !result.checkpoints.is_empty() {
        match blowup_analysis(
            &eng,
            &conn,
            &result.h0,
            &result.checkpoints,
            cfg.analysis.blowup_min_gap,
        ) {
            Ok(report) => {
                if cfg.analysis.splitting {
                    let last = result.checkpoints.last().expect("nonempty checkpoints");
                    splitting =
                        splitting_check(&eng, &conn, &last.h, &report.projector).ok();
                }
                blowup = Some(BlowupSummary {
                    checkpoints: report.checkpoints,
                    projector_matrix: matrix_rows(&report.projector.node(0), conn.rank()),
                });
            }
            // a missing gap is a finding, not a failure
            Err(NhymError::GapCollapse { .. }) => {}
            Err(other) => return Err(other),
        }
    }

    let oracle = built.scalar_potential.as_ref().map(|f| OracleSummary {
        harmonic_sup_error: harmonic_comparison(&eng, f, &result.final_h),
    });

    let mut snapshots = Vec::new();
    if cfg.output.snapshots {
        let mut snap = Snapshot::new(eng.geometry(), conn.rank());
        snap.push_metric("h0", &result.h0)?;
        snap.push_metric("h_final", &result.final_h)?;
        snapshots.push(("fields.bin".to_string(), snap.encode()));
    }

    let terminal = result.rows.last().expect("flow records at least one row").clone();
    let summary = RunSummary {
        status: result.status,
        exit_code: result.status.exit_code(),
        t_end: result.t_end,
        steps: result.steps,
        dt_floor_hit: result.dt_floor_hit,
        certificate: CertificateSummary::from(&cert),
        terminal,
        monitor,
        blowup,
        splitting,
        oracle,
        ledger_checksum: conventions::ledger_checksum(),
    };

    Ok(Artifacts { summary, series: series_csv(&result.rows), snapshots, result })
}

fn matrix_rows(mat: &[num_complex::Complex64], rank: usize) -> Vec<Vec<(f64, f64)>> {
    (0..rank)
        .map(|i| (0..rank).map(|j| (mat[i * rank + j].re, mat[i * rank + j].im)).collect())
        .collect()
}

/// Sup-norm distance between the terminal rank-1 metric and the closed-form
/// harmonic metric `e^{2f}`, after removing the conserved global scalar.
pub fn harmonic_comparison(eng: &SpectralEngine, f: &[f64], h: &MetricField) -> f64 {
    let nodes = h.end.nodes();
    if h.end.rank() != 1 || f.len() != nodes {
        return f64::NAN;
    }
    let mut got: Vec<f64> = (0..nodes).map(|node| h.end.node(node)[0].re.ln()).collect();
    let mut want: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
    let got_mean = eng.integrate_real(&got) / eng.geometry().volume();
    let want_mean = eng.integrate_real(&want) / eng.geometry().volume();
    for v in &mut got {
        *v -= got_mean;
    }
    for v in &mut want {
        *v -= want_mean;
    }
    got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::example_config;
    use crate::presets::PresetSpec;

    #[test]
    fn nilpotent_example_runs_to_blowup_with_a_full_report() {
        let cfg = example_config();
        let artifacts = run_experiment(&cfg).unwrap();
        assert_eq!(artifacts.summary.status, FlowStatus::Blowup);
        assert_eq!(artifacts.summary.exit_code, 10);
        let blowup = artifacts.summary.blowup.as_ref().expect("blow-up report");
        assert_eq!(blowup.checkpoints.last().unwrap().projector_rank, 1);
        // Along the rescaled blow-up orbit the second fundamental form of the
        // extracted subsheaf decays to zero: the limit splits.
        let splitting = artifacts.summary.splitting.as_ref().expect("splitting report");
        assert!(splitting.beta_l2 < 1e-6, "beta = {:.3e}", splitting.beta_l2);
        assert!(splitting.pp_residual < 1e-8);
        assert!(splitting.qq_residual < 1e-8);
        assert!(splitting.off_residual < 1e-8);
        assert!(artifacts.series.lines().count() > 2);
    }

    #[test]
    fn artifacts_are_deterministic() {
        let mut cfg = example_config();
        cfg.output.snapshots = true;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.summary.to_json(), b.summary.to_json());
        assert_eq!(a.snapshots, b.snapshots);
    }

    #[test]
    fn gradient_preset_converges_and_matches_the_oracle() {
        let mut cfg = example_config();
        cfg.geometry.sizes = vec![32];
        cfg.connection = PresetSpec::ScalarExact { max_mode: 2, amplitude: 0.3, seed: 11 };
        cfg.flow.t_max = 20.0;
        // The double spectral derivative amplifies f64 roundoff by roughly the
        // squared Nyquist wavenumber, leaving a residual floor near 1.6e-9 on a
        // 32^2 grid; the tolerance has to clear that floor.
        cfg.flow.tolerance = 5e-9;
        cfg.flow.normalize = false;
        cfg.flow.stride = 50;
        let artifacts = run_experiment(&cfg).unwrap();
        assert_eq!(artifacts.summary.status, FlowStatus::Converged);
        let oracle = artifacts.summary.oracle.as_ref().expect("oracle comparison");
        assert!(
            oracle.harmonic_sup_error < 1e-6,
            "harmonic mismatch {}",
            oracle.harmonic_sup_error
        );
    }

    #[test]
    fn invalid_connection_is_rejected_with_a_validation_error() {
        let mut cfg = example_config();
        // constant dz and dzbar parts that are not adjoint: curvature survives
        cfg.connection = PresetSpec::Inline {
            dz: vec![vec![vec![(0.0, 0.0), (1.0, 0.0)], vec![(0.0, 0.0), (0.0, 0.0)]]],
            dzbar: vec![vec![vec![(0.0, 0.0), (0.0, 0.0)], vec![(0.0, 1.5), (0.0, 0.0)]]],
        };
        match run_experiment(&cfg) {
            Err(e @ NhymError::Validation(_)) => assert_eq!(e.exit_code(), 2),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn snapshots_round_trip_through_the_codec() {
        let mut cfg = example_config();
        cfg.flow.t_max = 1.0;
        cfg.flow.blowup_threshold = 1e9;
        cfg.output.snapshots = true;
        let artifacts = run_experiment(&cfg).unwrap();
        let (name, bytes) = &artifacts.snapshots[0];
        assert_eq!(name, "fields.bin");
        let snap = Snapshot::decode(bytes).unwrap();
        assert!(snap.component("h0").is_some());
        assert!(snap.component("h_final").is_some());
    }
}
