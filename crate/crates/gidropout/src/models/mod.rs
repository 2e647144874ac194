//! The two reference classifiers, assembled from the nn kernel with the
//! word-dropout layer at the input: a convolutional encoder with
//! max-over-time pooling and a biLSTM with multi-hop self-attention.

mod checkpoint;
mod cnn;
mod rnn;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use cnn::CnnModel;
pub use rnn::RnnModel;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{Dataset, Vocabulary};
use crate::dropout::{DropoutPolicy, MaskSample};
use crate::nn::{ParamSet, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("non-finite loss")]
    NonFiniteLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    SelfAttnRnn,
}

/// Architecture and hyperparameters. Defaults are desk-scale; the full-size
/// settings from the reference setups stay expressible through the fields.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Convolution window widths, ascending.
    #[serde(default = "default_widths")]
    pub filter_widths: Vec<usize>,
    #[serde(default = "default_filters")]
    pub filters_per_width: usize,
    /// Hidden units per LSTM direction.
    #[serde(default = "default_units")]
    pub hidden_units: usize,
    /// Attention hidden width (d_a).
    #[serde(default = "default_units")]
    pub attn_dim: usize,
    /// Attention hops (r).
    #[serde(default = "default_hops")]
    pub attn_hops: usize,
    #[serde(default = "default_mlp_hidden")]
    pub mlp_hidden: usize,
    #[serde(default = "default_penalty")]
    pub penalty_coef: f64,
    /// Classic inverted dropout rate on the classifier head.
    #[serde(default = "default_mlp_dropout")]
    pub mlp_dropout: f64,
}

fn default_embed_dim() -> usize {
    50
}
fn default_widths() -> Vec<usize> {
    vec![3, 4, 5]
}
fn default_filters() -> usize {
    32
}
fn default_units() -> usize {
    32
}
fn default_hops() -> usize {
    2
}
fn default_mlp_hidden() -> usize {
    64
}
fn default_penalty() -> f64 {
    1.0
}
fn default_mlp_dropout() -> f64 {
    0.5
}

impl ModelConfig {
    pub fn cnn() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::Cnn,
            embed_dim: default_embed_dim(),
            filter_widths: default_widths(),
            filters_per_width: default_filters(),
            hidden_units: default_units(),
            attn_dim: default_units(),
            attn_hops: default_hops(),
            mlp_hidden: default_mlp_hidden(),
            penalty_coef: default_penalty(),
            mlp_dropout: default_mlp_dropout(),
        }
    }

    pub fn self_attn_rnn() -> ModelConfig {
        ModelConfig {
            kind: ModelKind::SelfAttnRnn,
            ..ModelConfig::cnn()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 {
            return Err(ModelError::BadConfig("embed_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.mlp_dropout) {
            return Err(ModelError::BadConfig(format!(
                "mlp_dropout must be in [0,1), got {}",
                self.mlp_dropout
            )));
        }
        match self.kind {
            ModelKind::Cnn => {
                if self.filter_widths.is_empty() {
                    return Err(ModelError::BadConfig("filter_widths empty".into()));
                }
                if self.filter_widths.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ModelError::BadConfig(
                        "filter_widths must be strictly ascending".into(),
                    ));
                }
                if self.filter_widths[0] == 0 || self.filters_per_width == 0 {
                    return Err(ModelError::BadConfig("zero-sized filters".into()));
                }
            }
            ModelKind::SelfAttnRnn => {
                if self.hidden_units == 0
                    || self.attn_dim == 0
                    || self.attn_hops == 0
                    || self.mlp_hidden == 0
                {
                    return Err(ModelError::BadConfig("zero-sized rnn dimension".into()));
                }
                if self.penalty_coef < 0.0 {
                    return Err(ModelError::BadConfig("negative penalty_coef".into()));
                }
            }
        }
        Ok(())
    }
}

/// Class distribution over the label set and its argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label: usize,
}

impl Prediction {
    pub(crate) fn from_logits(logits: &[f64]) -> Prediction {
        let probs = crate::nn::softmax(logits);
        let label = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        Prediction { probs, label }
    }
}

/// A tokenized example resolved against a vocabulary and a dropout policy:
/// token ids (unknown words map to the padding index 0) plus the per-token
/// drop probability under the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub ids: Vec<usize>,
    pub drop_probs: Vec<f64>,
    pub label: usize,
}

pub fn encode_example(
    tokens: &[String],
    label: usize,
    vocab: &Vocabulary,
    policy: &DropoutPolicy,
) -> EncodedExample {
    EncodedExample {
        ids: vocab.encode(tokens),
        drop_probs: tokens.iter().map(|t| policy.prob(t)).collect(),
        label,
    }
}

pub fn encode_dataset(
    data: &Dataset,
    vocab: &Vocabulary,
    policy: &DropoutPolicy,
) -> Vec<EncodedExample> {
    data.examples
        .iter()
        .map(|ex| encode_example(&ex.tokens, ex.label, vocab, policy))
        .collect()
}

/// Loss components of one batch: `total = ce + penalty` (penalty zero for
/// the CNN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub penalty: f64,
}

/// Either classifier behind one interface.
pub enum Model {
    Cnn(CnnModel),
    Rnn(RnnModel),
}

impl Model {
    /// Builds a model with fresh random parameters. The parameter layout
    /// and rng consumption order are fixed, so a seed pins the init.
    pub fn build(
        config: &ModelConfig,
        vocab_size: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> Result<Model, ModelError> {
        config.validate()?;
        Ok(match config.kind {
            ModelKind::Cnn => Model::Cnn(CnnModel::build(config, vocab_size, classes, rng)),
            ModelKind::SelfAttnRnn => {
                Model::Rnn(RnnModel::build(config, vocab_size, classes, rng))
            }
        })
    }

    /// Same as [`Model::build`] but with a caller-provided embedding matrix
    /// (e.g. loaded from a pretrained text file).
    pub fn build_with_embeddings(
        config: &ModelConfig,
        vocab_size: usize,
        classes: usize,
        embeddings: Tensor,
        rng: &mut impl Rng,
    ) -> Result<Model, ModelError> {
        assert_eq!(
            embeddings.dims2(),
            (vocab_size, config.embed_dim),
            "embedding matrix shape mismatch"
        );
        let mut model = Model::build(config, vocab_size, classes, rng)?;
        let emb_id = model.embedding_id();
        *model.params_mut().value_mut(emb_id) = embeddings;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Cnn(m) => &m.config,
            Model::Rnn(m) => &m.config,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Model::Cnn(m) => m.vocab_size,
            Model::Rnn(m) => m.vocab_size,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Model::Cnn(m) => m.classes,
            Model::Rnn(m) => m.classes,
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Cnn(m) => &m.params,
            Model::Rnn(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Cnn(m) => &mut m.params,
            Model::Rnn(m) => &mut m.params,
        }
    }

    fn embedding_id(&self) -> crate::nn::ParamId {
        match self {
            Model::Cnn(m) => m.embedding_id(),
            Model::Rnn(m) => m.embedding_id(),
        }
    }

    /// Evaluation-phase forward: the dropout layer runs with every word
    /// kept and the classifier-head dropout is disabled. Deterministic.
    pub fn predict(&self, ids: &[usize]) -> Prediction {
        match self {
            Model::Cnn(m) => m.predict(ids),
            Model::Rnn(m) => m.predict(ids),
        }
    }

    /// Forward with the word-dropout layer absent entirely (not merely set
    /// to keep-everything). Must match [`Model::predict`] bit for bit.
    pub fn predict_without_gi(&self, ids: &[usize]) -> Prediction {
        match self {
            Model::Cnn(m) => m.predict_without_gi(ids),
            Model::Rnn(m) => m.predict_without_gi(ids),
        }
    }

    /// Mean train-phase loss over the batch with gradients accumulated into
    /// the parameter set. Word masks are resampled per call; the classifier
    /// head applies inverted dropout at the configured rate.
    pub fn loss_and_grads(
        &mut self,
        batch: &[&EncodedExample],
        rng: &mut impl Rng,
    ) -> Result<LossBreakdown, ModelError> {
        assert!(!batch.is_empty(), "empty batch");
        match self {
            Model::Cnn(m) => m.loss_and_grads(batch, rng),
            Model::Rnn(m) => m.loss_and_grads(batch, rng),
        }
    }

    /// Deterministic variant used by the gradient tests: explicit word
    /// masks (`None` = keep all) and no classifier-head dropout.
    pub fn loss_and_grads_masked(
        &mut self,
        batch: &[&EncodedExample],
        masks: Option<&[MaskSample]>,
    ) -> Result<LossBreakdown, ModelError> {
        match self {
            Model::Cnn(m) => m.loss_and_grads_masked(batch, masks),
            Model::Rnn(m) => m.loss_and_grads_masked(batch, masks),
        }
    }

    /// Forward-only companion of [`Model::loss_and_grads_masked`]; the
    /// closure the finite-difference checker evaluates.
    pub fn batch_loss_masked(
        &self,
        batch: &[&EncodedExample],
        masks: Option<&[MaskSample]>,
    ) -> f64 {
        match self {
            Model::Cnn(m) => m.batch_loss_masked(batch, masks),
            Model::Rnn(m) => m.batch_loss_masked(batch, masks),
        }
    }
}
