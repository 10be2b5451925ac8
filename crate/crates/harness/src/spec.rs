//! Declarative experiment description, read from TOML.

use std::path::{Path, PathBuf};

use loopscope_core::classify::ClassifierParams;
use loopscope_core::dynamics::{ConvergenceTest, FixedPointParams, CYCLIC_SHIFT_TOL};
use loopscope_core::metrics::Metric;
use loopscope_core::model::{Capture, ModelConfig, NormScheme};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Added to the run seed to seed random input embeddings. The model seed
/// is the run seed itself and the initial recurrent state uses the model
/// config's own offset, so the three streams never share a seed.
pub const INPUT_SEED_OFFSET: u64 = 0xD1B5_4A32_D192_ED03;

/// Classification needs at least this many recurrences.
pub const MIN_CLASSIFY_LOOPS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    StabilityGrid,
    Dynamics,
    Classify,
    Trajectory,
    Metrics,
    Prop2Audit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::StabilityGrid => "stability_grid",
            ExperimentKind::Dynamics => "dynamics",
            ExperimentKind::Classify => "classify",
            ExperimentKind::Trajectory => "trajectory",
            ExperimentKind::Metrics => "metrics",
            ExperimentKind::Prop2Audit => "prop2_audit",
        }
    }

    /// What a run records when the spec does not say.
    pub fn default_capture(self) -> Capture {
        match self {
            ExperimentKind::StabilityGrid | ExperimentKind::Classify | ExperimentKind::Trajectory => {
                Capture::residuals_only()
            }
            ExperimentKind::Dynamics | ExperimentKind::Metrics => Capture {
                attn_inputs: false,
                ..Capture::all()
            },
            ExperimentKind::Prop2Audit => Capture::all(),
        }
    }
}

/// Input sequence: random embeddings or token ids looked up in the model's
/// embedding table.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sequence {
    /// Number of tokens with i.i.d. `N(0, 1)` embedding entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_embeddings: Option<usize>,
    /// Fixed base seed for the random input; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<Vec<usize>>,
}

pub const DEFAULT_TOKENS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    Random { tokens: usize, seed: Option<u64> },
    Tokens(Vec<usize>),
}

impl Sequence {
    pub fn source(&self) -> Result<InputSource> {
        match (&self.token_ids, self.random_embeddings) {
            (Some(_), Some(_)) => Err(HarnessError::Spec(
                "sequence: give either random_embeddings or token_ids, not both".into(),
            )),
            (Some(ids), None) if ids.is_empty() => Err(HarnessError::Spec("sequence.token_ids is empty".into())),
            (Some(_), None) if self.seed.is_some() => {
                Err(HarnessError::Spec("sequence.seed only applies to random_embeddings".into()))
            }
            (Some(ids), None) => Ok(InputSource::Tokens(ids.clone())),
            (None, Some(0)) => Err(HarnessError::Spec("sequence.random_embeddings must be positive".into())),
            (None, t) => Ok(InputSource::Random {
                tokens: t.unwrap_or(DEFAULT_TOKENS),
                seed: self.seed,
            }),
        }
    }
}

/// Fixed point settings other than the reference recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSettings {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_convergence")]
    pub convergence: ConvergenceTest,
    #[serde(default = "default_eps_degenerate")]
    pub eps_degenerate: f64,
}

fn default_window() -> usize {
    FixedPointParams::default().window
}

fn default_convergence() -> ConvergenceTest {
    FixedPointParams::default().convergence
}

fn default_eps_degenerate() -> f64 {
    FixedPointParams::default().eps_degenerate
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            window: default_window(),
            convergence: default_convergence(),
            eps_degenerate: default_eps_degenerate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    #[serde(default = "all_schemes")]
    pub schemes: Vec<NormScheme>,
    #[serde(default = "both_injection")]
    pub injection: Vec<bool>,
    /// Extra cycles allowed when driving a converged cell to its fixed point
    /// for the cyclic-shift check.
    #[serde(default = "default_prop1_iterations")]
    pub prop1_max_iterations: usize,
    #[serde(default = "default_prop1_tolerance")]
    pub prop1_tolerance: f64,
}

fn all_schemes() -> Vec<NormScheme> {
    NormScheme::ALL.to_vec()
}

fn both_injection() -> Vec<bool> {
    vec![true, false]
}

fn default_prop1_iterations() -> usize {
    200
}

fn default_prop1_tolerance() -> f64 {
    CYCLIC_SHIFT_TOL
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            schemes: all_schemes(),
            injection: both_injection(),
            prop1_max_iterations: default_prop1_iterations(),
            prop1_tolerance: default_prop1_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Model description. Its `seed` is replaced by each run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    /// Weight file to load instead of drawing a random model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default = "default_loops")]
    pub loops: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sequence: Sequence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<Capture>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// 1-based recurrence whose states stand in for the fixed points.
    #[serde(default = "default_reference")]
    pub reference: usize,
    #[serde(default)]
    pub fixed_point: FixedPointSettings,
    #[serde(default)]
    pub classifier: ClassifierParams,
    #[serde(default)]
    pub grid: GridSettings,
    /// Token followed by the trajectory pipeline; all tokens when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<usize>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Zero the MLP output projection of this global layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablate_mlp_layer: Option<usize>,
}

fn default_loops() -> usize {
    128
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_reference() -> usize {
    FixedPointParams::default().reference
}

fn default_metrics() -> Vec<Metric> {
    Metric::SUITE.to_vec()
}

/// 12 recurrent layers, no prelude or coda, width 512 split over 4 heads,
/// pre-norm with input injection.
pub fn default_model() -> ModelConfig {
    ModelConfig::looped(512, 4, (0, 12, 0), NormScheme::PreNorm, true)
}

impl ExperimentSpec {
    /// A spec of `kind` with every other field at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            model: None,
            weights: None,
            loops: default_loops(),
            seeds: default_seeds(),
            sequence: Sequence::default(),
            capture: None,
            output: default_output(),
            reference: default_reference(),
            fixed_point: FixedPointSettings::default(),
            classifier: ClassifierParams::default(),
            grid: GridSettings::default(),
            token: None,
            metrics: default_metrics(),
            ablate_mlp_layer: None,
        }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Spec(msg));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.loops == 0 {
            return bad("loops must be at least 1".into());
        }
        if self.reference == 0 {
            return bad("reference must be at least 1".into());
        }
        if self.model.is_some() && self.weights.is_some() {
            return bad("give either model or weights, not both".into());
        }
        if let Some(m) = &self.model {
            m.validate().map_err(|e| HarnessError::Spec(format!("model: {e}")))?;
        }
        self.classifier
            .validate()
            .map_err(|e| HarnessError::Spec(format!("classifier: {e}")))?;
        self.sequence.source()?;
        let fp = &self.fixed_point;
        if fp.window == 0 {
            return bad("fixed_point.window must be at least 1".into());
        }
        if !(fp.eps_degenerate.is_finite() && fp.eps_degenerate > 0.0) {
            return bad("fixed_point.eps_degenerate must be positive".into());
        }
        let threshold = match fp.convergence {
            ConvergenceTest::CosineGap(t) | ConvergenceTest::RelativeDistance(t) => t,
        };
        if !(threshold.is_finite() && threshold > 0.0) {
            return bad("fixed_point.convergence threshold must be positive".into());
        }
        match self.kind {
            ExperimentKind::StabilityGrid => {
                if self.weights.is_some() {
                    return bad("stability_grid draws its own models; weights are not allowed".into());
                }
                if self.grid.schemes.is_empty() || self.grid.injection.is_empty() {
                    return bad("grid.schemes and grid.injection must not be empty".into());
                }
                if !(self.grid.prop1_tolerance.is_finite() && self.grid.prop1_tolerance > 0.0) {
                    return bad("grid.prop1_tolerance must be positive".into());
                }
            }
            ExperimentKind::Classify if self.loops < MIN_CLASSIFY_LOOPS => {
                return bad(format!(
                    "classify needs loops >= {MIN_CLASSIFY_LOOPS}, got {}",
                    self.loops
                ));
            }
            ExperimentKind::Metrics if self.metrics.is_empty() => {
                return bad("metrics must not be empty".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Replace fields given on the command line.
    pub fn apply_overrides(&mut self, seed: Option<u64>, loops: Option<usize>, output: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seeds = vec![s];
        }
        if let Some(l) = loops {
            self.loops = l;
        }
        if let Some(o) = output {
            self.output = o;
        }
    }

    pub fn capture(&self) -> Capture {
        self.capture.clone().unwrap_or_else(|| self.kind.default_capture())
    }

    pub fn base_model(&self) -> ModelConfig {
        self.model.clone().unwrap_or_else(default_model)
    }

    /// Fixed point parameters for a run of `self.loops` recurrences. The
    /// reference is capped at the last recurrence and the window shrunk to
    /// fit before it.
    pub fn fixed_point_params(&self) -> FixedPointParams {
        let reference = self.reference.min(self.loops);
        FixedPointParams {
            reference,
            window: self.fixed_point.window.min(reference.saturating_sub(1)),
            convergence: self.fixed_point.convergence,
            eps_degenerate: self.fixed_point.eps_degenerate,
        }
    }

    /// Seed for the random input of run seed `seed`.
    pub fn input_seed(&self, seed: u64) -> u64 {
        self.sequence.seed.unwrap_or(seed).wrapping_add(INPUT_SEED_OFFSET)
    }
}

/// Read and validate a spec file. Parse errors carry the line and column,
/// unknown keys are named.
pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::SpecParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = ExperimentSpec::from_toml(&text).map_err(|e| HarnessError::SpecParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}
