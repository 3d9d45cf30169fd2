//! Experiment configuration: the JSON schema accepted by the command-line
//! driver and construction of the runtime objects it describes.
//!
//! Unknown keys are rejected everywhere so that typos surface as schema
//! errors instead of silently falling back to defaults.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NhymError;
use crate::fields::{EndField, MetricField};
use crate::flow::FlowConfig;
use crate::geometry::TorusGeometry;
use crate::presets::{parse_matrix, MatrixSpec, PresetSpec};
use crate::random;
use crate::Result;

/// Torus discretization block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Complex dimension.
    pub n: usize,
    /// Grid sizes: one entry (shared by all real axes) or one per real axis.
    pub sizes: Vec<usize>,
    /// Periods: omitted (all 1), one entry, or one per real axis.
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
}

impl GeometryConfig {
    pub fn build(&self) -> Result<TorusGeometry> {
        let axes = 2 * self.n;
        let sizes: Vec<usize> = match self.sizes.len() {
            1 => vec![self.sizes[0]; axes],
            l if l == axes => self.sizes.clone(),
            l => {
                return Err(NhymError::Config(format!(
                    "geometry.sizes needs 1 or {axes} entries, got {l}"
                )))
            }
        };
        let periods: Vec<f64> = match &self.periods {
            None => vec![1.0; axes],
            Some(p) if p.len() == 1 => vec![p[0]; axes],
            Some(p) if p.len() == axes => p.clone(),
            Some(p) => {
                return Err(NhymError::Config(format!(
                    "geometry.periods needs 1 or {axes} entries, got {}",
                    p.len()
                )))
            }
        };
        TorusGeometry::new(self.n, &sizes, &periods)
    }
}

/// Initial metric block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialMetricSpec {
    /// Flat identity metric.
    Identity,
    /// `e^{2u} Id` for a seeded band-limited real scalar `u`.
    Conformal { max_mode: usize, amplitude: f64 },
    /// `exp` of a seeded band-limited Hermitian field.
    Random { max_mode: usize, amplitude: f64 },
    /// A constant Hermitian positive matrix applied at every node.
    Constant { matrix: MatrixSpec },
}

impl Default for InitialMetricSpec {
    fn default() -> Self {
        Self::Identity
    }
}

impl InitialMetricSpec {
    /// Materialize the initial metric on a grid. The generator is only
    /// advanced by the seeded variants.
    pub fn build(
        &self,
        geo: &TorusGeometry,
        rank: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<MetricField> {
        let nodes = geo.nodes();
        match self {
            Self::Identity => Ok(MetricField::identity(nodes, rank)),
            Self::Conformal { max_mode, amplitude } => {
                let u = random::scalar_field(geo, *max_mode, *amplitude, rng);
                Ok(MetricField::identity(nodes, rank).conformal_scale(&u))
            }
            Self::Random { max_mode, amplitude } => {
                random::metric(geo, rank, *max_mode, *amplitude, rng)
            }
            Self::Constant { matrix } => {
                let (mrank, m) = parse_matrix(matrix)?;
                if mrank != rank {
                    return Err(NhymError::Config(format!(
                        "initial_metric.matrix is {mrank}x{mrank} but the bundle has rank {rank}"
                    )));
                }
                let field = EndField::constant(nodes, rank, &m);
                MetricField::from_end(field)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Conformal { amplitude, .. } | Self::Random { amplitude, .. } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return Err(NhymError::Config(
                        "initial_metric.amplitude must be finite and nonnegative".into(),
                    ));
                }
            }
            Self::Constant { matrix } => {
                if matrix.is_empty() {
                    return Err(NhymError::Config(
                        "initial_metric.matrix must not be empty".into(),
                    ));
                }
            }
            Self::Identity => {}
        }
        Ok(())
    }
}

/// Post-flow analysis block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Minimum averaged spectral gap accepted by the projector extraction.
    pub blowup_min_gap: f64,
    /// Run splitting diagnostics with the extracted projector after a
    /// blow-up.
    pub splitting: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { blowup_min_gap: 0.05, splitting: true }
    }
}

/// Output block. The destination directory comes from the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write binary snapshots of the initial and final metric.
    pub snapshots: bool,
}

#[allow(clippy::derivable_impls)]
impl Default for OutputConfig {
    fn default() -> Self {
        Self { snapshots: false }
    }
}

/// Top-level experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub connection: PresetSpec,
    #[serde(default)]
    pub initial_metric: InitialMetricSpec,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parse and validate a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometry.n == 0 {
            return Err(NhymError::Config("geometry.n must be at least 1".into()));
        }
        if self.geometry.sizes.iter().any(|&s| s < 2) {
            return Err(NhymError::Config("geometry.sizes entries must be at least 2".into()));
        }
        if let Some(periods) = &self.geometry.periods {
            if periods.iter().any(|p| !p.is_finite() || *p <= 0.0) {
                return Err(NhymError::Config(
                    "geometry.periods entries must be finite and positive".into(),
                ));
            }
        }
        self.initial_metric.validate()?;
        self.flow.validate()?;
        if !self.analysis.blowup_min_gap.is_finite() || self.analysis.blowup_min_gap <= 0.0 {
            return Err(NhymError::Config(
                "analysis.blowup_min_gap must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// A ready-to-run nilpotent blow-up experiment, used as documentation, as a
/// smoke-test fixture and as a fuzzing corpus seed.
///
/// The driver of this orbit decays like `1/t` even though the metric
/// diverges, so the convergence tolerance is set below the driver value at
/// the blow-up threshold; otherwise the run would stop "converged" first.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        geometry: GeometryConfig { n: 1, sizes: vec![16], periods: None },
        connection: PresetSpec::Nilpotent,
        initial_metric: InitialMetricSpec::Identity,
        flow: FlowConfig {
            t_max: 1e13,
            tolerance: 1e-13,
            stride: 500,
            ..FlowConfig::default()
        },
        output: OutputConfig::default(),
        analysis: AnalysisConfig::default(),
        seed: 7,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn example_round_trips_and_validates() {
        let cfg = example_config();
        cfg.validate().unwrap();
        let text = cfg.to_json_pretty();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.to_json_pretty(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{
            "geometry": {"n": 1, "sizes": [16]},
            "connection": {"kind": "nilpotent"},
            "surprise": true
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
        let nested = r#"{
            "geometry": {"n": 1, "sizes": [16], "colour": "red"},
            "connection": {"kind": "nilpotent"}
        }"#;
        assert!(ExperimentConfig::from_json(nested).is_err());
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let text = r#"{"geometry": {"n": 1, "sizes": [16]}, "connection": {"kind": "nilpotent"}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.seed, 0);
        assert!(matches!(cfg.initial_metric, InitialMetricSpec::Identity));
        assert_eq!(cfg.flow.stride, FlowConfig::default().stride);
        let geo = cfg.geometry.build().unwrap();
        assert_eq!(geo.sizes(), &[16, 16]);
        assert_eq!(geo.periods(), &[1.0, 1.0]);
    }

    #[test]
    fn geometry_shape_errors_are_reported() {
        let bad_sizes = GeometryConfig { n: 2, sizes: vec![8, 8], periods: None };
        assert!(bad_sizes.build().is_err());
        let bad_periods =
            GeometryConfig { n: 1, sizes: vec![8], periods: Some(vec![1.0, 2.0, 3.0]) };
        assert!(bad_periods.build().is_err());
    }

    #[test]
    fn initial_metric_variants_build() {
        let geo = TorusGeometry::square(1, 8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [
            InitialMetricSpec::Identity,
            InitialMetricSpec::Conformal { max_mode: 1, amplitude: 0.2 },
            InitialMetricSpec::Random { max_mode: 1, amplitude: 0.2 },
            InitialMetricSpec::Constant {
                matrix: vec![vec![(2.0, 0.0), (0.5, 0.0)], vec![(0.5, 0.0), (1.0, 0.0)]],
            },
        ] {
            let h = spec.build(&geo, 2, &mut rng).unwrap();
            assert_eq!(h.end.nodes(), geo.nodes());
        }
    }

    #[test]
    fn indefinite_constant_metric_is_rejected() {
        let geo = TorusGeometry::square(1, 4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = InitialMetricSpec::Constant {
            matrix: vec![vec![(1.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (-1.0, 0.0)]],
        };
        assert!(spec.build(&geo, 2, &mut rng).is_err());
    }
}
