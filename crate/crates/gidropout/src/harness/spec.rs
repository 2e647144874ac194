//! Experiment specification: the JSON config consumed by the CLI and the
//! protocol operations.

use std::path::PathBuf;

use crate::dropout::DropoutPolicy;
use crate::models::ModelConfig;
use crate::nn::AdamConfig;
use crate::scoring::{table_from_dataset, ScoringConfig};

use super::HarnessError;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DataSpec {
    /// Training TSV; with `folds` set this is the whole corpus to
    /// cross-validate.
    pub train: PathBuf,
    /// Fixed test split; required unless `folds` is set.
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// k-fold cross-validation over `train` when set.
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default = "default_true")]
    pub lowercase: bool,
    /// Dev fraction carved from the training data when no dev split exists.
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    /// Seed fixing fold assignment (independent of the model seeds).
    #[serde(default = "default_cv_seed")]
    pub cv_seed: u64,
    /// Optional pretrained embeddings (text format, `word v1 .. vd`).
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}
fn default_dev_fraction() -> f64 {
    0.1
}
fn default_cv_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Off,
    Uniform,
    Table,
}

/// Which dropout policy a single training run uses.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolicySpec {
    pub mode: PolicyMode,
    /// Uniform drop probability (mode = uniform).
    #[serde(default)]
    pub p: Option<f64>,
    /// Frequency-factor base (mode = table).
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            mode: PolicyMode::Off,
            p: None,
            beta: None,
            alpha: 1.0,
        }
    }
}

impl PolicySpec {
    pub fn off() -> PolicySpec {
        PolicySpec::default()
    }

    pub fn uniform(p: f64) -> PolicySpec {
        PolicySpec {
            mode: PolicyMode::Uniform,
            p: Some(p),
            ..PolicySpec::default()
        }
    }

    pub fn table(beta: f64) -> PolicySpec {
        PolicySpec {
            mode: PolicyMode::Table,
            beta: Some(beta),
            ..PolicySpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.mode {
            PolicyMode::Off => Ok(()),
            PolicyMode::Uniform => match self.p {
                Some(p) if (0.0..1.0).contains(&p) => Ok(()),
                other => Err(HarnessError::Config(format!(
                    "uniform policy needs p in [0,1), got {other:?}"
                ))),
            },
            PolicyMode::Table => match self.beta {
                Some(b) if (0.0..1.0).contains(&b) && b > 0.0 => {
                    ScoringConfig::new(self.alpha, b)
                        .map(|_| ())
                        .map_err(|e| HarnessError::Config(e.to_string()))
                }
                other => Err(HarnessError::Config(format!(
                    "table policy needs beta in (0,1), got {other:?}"
                ))),
            },
        }
    }

    /// Resolves into a concrete policy; table mode fits the importance
    /// table on the given training split.
    pub fn resolve(&self, train: &crate::corpus::Dataset) -> Result<DropoutPolicy, HarnessError> {
        self.validate()?;
        Ok(match self.mode {
            PolicyMode::Off => DropoutPolicy::Off,
            PolicyMode::Uniform => DropoutPolicy::Uniform(self.p.unwrap()),
            PolicyMode::Table => {
                let cfg = ScoringConfig::new(self.alpha, self.beta.unwrap())
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                DropoutPolicy::Table(table_from_dataset(train, &cfg)?)
            }
        })
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainParams {
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Early-stopping patience: consecutive non-improving dev evaluations
    /// before training halts.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_batch() -> usize {
    32
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            adam: AdamConfig::default(),
            batch_size: default_batch(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(HarnessError::Config(
                "batch_size, max_epochs and patience must be >= 1".into(),
            ));
        }
        if !self.adam.learning_rate.is_finite()
            || self.adam.learning_rate <= 0.0
            || self.adam.epsilon < 0.0
        {
            return Err(HarnessError::Config(
                "learning rate must be > 0 and epsilon >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Full experiment description for `train`, `compare`, `sweep-beta` and
/// `ablate`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    pub data: DataSpec,
    pub model: ModelConfig,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Frequency-factor bases evaluated by `compare` and `sweep-beta`.
    #[serde(default)]
    pub beta_grid: Vec<f64>,
    /// Uniform probabilities evaluated by `compare`.
    #[serde(default)]
    pub p_grid: Vec<f64>,
    /// Top-k word-removal sizes evaluated by `ablate`.
    #[serde(default)]
    pub ablation_ks: Vec<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

impl ExperimentSpec {
    pub fn from_json(json: &str) -> Result<ExperimentSpec, HarnessError> {
        let spec: ExperimentSpec =
            serde_json::from_str(json).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be non-empty".into()));
        }
        if self.data.test.is_none() && self.data.folds.is_none() {
            return Err(HarnessError::Config(
                "data needs either a test file or a fold count".into(),
            ));
        }
        if let Some(k) = self.data.folds {
            if k < 2 {
                return Err(HarnessError::Config("folds must be >= 2".into()));
            }
        }
        if !(self.data.dev_fraction > 0.0 && self.data.dev_fraction < 1.0) {
            return Err(HarnessError::Config("dev_fraction must be in (0,1)".into()));
        }
        for &b in &self.beta_grid {
            if !(b > 0.0 && b < 1.0) {
                return Err(HarnessError::Config(format!(
                    "beta grid value {b} outside (0,1)"
                )));
            }
        }
        for &p in &self.p_grid {
            if !(0.0..1.0).contains(&p) {
                return Err(HarnessError::Config(format!(
                    "p grid value {p} outside [0,1)"
                )));
            }
        }
        self.model
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.policy.validate()?;
        self.train.validate()
    }
}
