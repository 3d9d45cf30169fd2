//! Serialized run artifacts: the CSV monitoring series and the structured
//! run summary. Both are deterministic functions of the run data, so a
//! repeated experiment produces byte-identical files.

use serde::Serialize;

use crate::analysis::{BlowupCheckpointReport, MonitorReport, SplittingReport};
use crate::connection::ConnectionCertificate;
use crate::flow::{FlowRow, FlowStatus};
use crate::presets::MatrixSpec;

/// Fixed column contract of the monitoring series.
pub const SERIES_COLUMNS: &str =
    "t,dt,sup_phi,l2_phi,donaldson,energy,sigma0,s_sup,s_l1,det_res,phi_monotone_flag";

/// Render the recorded rows as CSV under the fixed column contract.
pub fn series_csv(rows: &[FlowRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(SERIES_COLUMNS);
    out.push('\n');
    for row in rows {
        let flag = if row.phi_monotone { 1 } else { 0 };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.t,
            row.dt,
            row.sup_phi,
            row.l2_phi,
            row.donaldson,
            row.energy,
            row.sigma0,
            row.s_sup,
            row.s_l1,
            row.det_res,
            flag
        ));
    }
    out
}

/// Connection certificate residuals in serializable form.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub res_f20: f64,
    pub res_f02: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub res_einstein: f64,
}

impl From<&ConnectionCertificate> for CertificateSummary {
    fn from(cert: &ConnectionCertificate) -> Self {
        Self {
            res_f20: cert.res_f20,
            res_f02: cert.res_f02,
            lambda_re: cert.lambda.re,
            lambda_im: cert.lambda.im,
            res_einstein: cert.res_einstein,
        }
    }
}

/// Blow-up section of the summary: per-checkpoint structure statistics and
/// the recovered projector as a constant matrix.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupSummary {
    pub checkpoints: Vec<BlowupCheckpointReport>,
    /// Node-0 matrix of the extracted projector, rows of `[re, im]` pairs.
    pub projector_matrix: MatrixSpec,
}

/// Comparison against an independently computed harmonic metric, available
/// for rank-1 gradient presets.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    /// Sup-norm mismatch between the terminal metric and the closed-form
    /// harmonic metric, up to the global scalar freedom.
    pub harmonic_sup_error: f64,
}

/// Structured description of a finished experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: FlowStatus,
    pub exit_code: i32,
    pub t_end: f64,
    pub steps: usize,
    pub dt_floor_hit: bool,
    pub certificate: CertificateSummary,
    /// Last recorded monitoring row.
    pub terminal: FlowRow,
    pub monitor: MonitorReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup: Option<BlowupSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splitting: Option<SplittingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    /// Checksum of the sign and normalization conventions this build uses;
    /// artifacts with different checksums are not comparable.
    pub ledger_checksum: String,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        text
    }
}
