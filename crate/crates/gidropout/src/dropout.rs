//! The word-level dropout layer: per-token keep/drop masks sampled from a
//! policy, applied by zeroing embedding rows at train time. Evaluation is
//! the identity — kept vectors are never rescaled, unlike classic inverted
//! dropout, because every word is present at test time.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::nn::Tensor;
use crate::scoring::ImportanceTable;

#[derive(Debug, Error)]
pub enum DropoutError {
    #[error("uniform dropout probability must be in [0,1), got {0}")]
    BadProbability(f64),
    #[error("mask length {mask} does not match sequence length {seq}")]
    LengthMismatch { mask: usize, seq: usize },
}

/// How per-token drop probabilities are chosen.
#[derive(Debug, Clone)]
pub enum DropoutPolicy {
    /// Never drop anything (evaluation mode, and the no-dropout baseline).
    Off,
    /// Every token dropped i.i.d. with the same probability.
    Uniform(f64),
    /// Each word dropped with its importance-table probability; words not
    /// in the table are never dropped.
    Table(Arc<ImportanceTable>),
}

impl DropoutPolicy {
    pub fn uniform(p: f64) -> Result<DropoutPolicy, DropoutError> {
        if !(0.0..1.0).contains(&p) {
            return Err(DropoutError::BadProbability(p));
        }
        Ok(DropoutPolicy::Uniform(p))
    }

    /// Evaluation-time policy: all drop probabilities zero so every word
    /// participates.
    pub fn eval_mode(&self) -> DropoutPolicy {
        DropoutPolicy::Off
    }

    /// Drop probability this policy assigns to a word.
    pub fn prob(&self, word: &str) -> f64 {
        match self {
            DropoutPolicy::Off => 0.0,
            DropoutPolicy::Uniform(p) => *p,
            DropoutPolicy::Table(table) => table.prob(word),
        }
    }

    pub fn is_off(&self) -> bool {
        matches!(self, DropoutPolicy::Off)
    }
}

/// Keep/drop decision per token position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSample {
    keep: Vec<bool>,
}

impl MaskSample {
    pub fn all_keep(len: usize) -> MaskSample {
        MaskSample {
            keep: vec![true; len],
        }
    }

    pub fn from_keep(keep: Vec<bool>) -> MaskSample {
        MaskSample { keep }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }
}

/// Draws a fresh mask for a token sequence. Every call resamples, so each
/// presentation of an example sees independent noise.
pub fn sample_mask<S: AsRef<str>>(
    tokens: &[S],
    policy: &DropoutPolicy,
    rng: &mut impl Rng,
) -> MaskSample {
    match policy {
        DropoutPolicy::Off => MaskSample::all_keep(tokens.len()),
        _ => {
            let probs: Vec<f64> = tokens.iter().map(|t| policy.prob(t.as_ref())).collect();
            sample_mask_from_probs(&probs, rng)
        }
    }
}

/// Mask sampling once per-token probabilities are already resolved; the
/// training loop caches probabilities per example and calls this.
pub fn sample_mask_from_probs(probs: &[f64], rng: &mut impl Rng) -> MaskSample {
    let keep = probs
        .iter()
        .map(|&p| !(p > 0.0 && rng.random::<f64>() < p))
        .collect();
    MaskSample { keep }
}

/// Zeroes the embedding rows of dropped positions. Kept rows are copied
/// bit-for-bit; there is no magnitude rescaling in either phase.
pub fn apply(mask: &MaskSample, embeddings: &Tensor) -> Result<Tensor, DropoutError> {
    let (n, _) = embeddings.dims2();
    if mask.len() != n {
        return Err(DropoutError::LengthMismatch {
            mask: mask.len(),
            seq: n,
        });
    }
    let mut out = embeddings.clone();
    for (i, &keep) in mask.keep.iter().enumerate() {
        if !keep {
            out.row_mut(i).fill(0.0);
        }
    }
    Ok(out)
}

/// Backward of [`apply`]: dropped rows pass no gradient, kept rows pass it
/// through unchanged.
pub fn apply_backward(mask: &MaskSample, d_out: &mut Tensor) {
    let (n, _) = d_out.dims2();
    assert_eq!(mask.len(), n, "mask/gradient length mismatch");
    for (i, &keep) in mask.keep.iter().enumerate() {
        if !keep {
            d_out.row_mut(i).fill(0.0);
        }
    }
}
