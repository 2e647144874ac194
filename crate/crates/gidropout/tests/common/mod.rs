//! Shared fixtures for the integration suites: tiny model configs, random
//! example batches, and the flat-parameter gradient check over a model.
//!
//! Compiled into several test binaries; not every binary uses every item.
#![allow(dead_code)]

pub mod grads;

use gidropout::dropout::MaskSample;
use gidropout::models::{EncodedExample, Model, ModelConfig};
use gidropout::nn::{grad_check, GradCheckConfig, GradCheckReport};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn tiny_cnn_config() -> ModelConfig {
    let mut cfg = ModelConfig::cnn();
    cfg.embed_dim = 4;
    cfg.filter_widths = vec![2, 3];
    cfg.filters_per_width = 3;
    cfg.mlp_dropout = 0.0;
    cfg
}

pub fn tiny_rnn_config() -> ModelConfig {
    let mut cfg = ModelConfig::self_attn_rnn();
    cfg.embed_dim = 4;
    cfg.hidden_units = 3;
    cfg.attn_dim = 3;
    cfg.attn_hops = 2;
    cfg.mlp_hidden = 5;
    cfg.penalty_coef = 1.0;
    cfg.mlp_dropout = 0.0;
    cfg
}

/// Random batch with ids in `1..vocab` (padding row 0 stays out of play)
/// and dropout probabilities zero. Keep `min_len` at least the widest
/// filter for CNN gradient checks so no position reads the frozen padding
/// row (finite differences would perturb it, the analytic side freezes it).
pub fn random_batch(
    vocab: usize,
    classes: usize,
    n_examples: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_examples)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            let ids: Vec<usize> = (0..len).map(|_| rng.random_range(1..vocab)).collect();
            EncodedExample {
                drop_probs: vec![0.0; ids.len()],
                label: rng.random_range(0..classes),
                ids,
            }
        })
        .collect()
}

/// Finite-difference check of every model parameter against the analytic
/// gradients of `loss_and_grads_masked` on a fixed batch.
pub fn model_grad_report(
    model: &mut Model,
    batch: &[&EncodedExample],
    masks: Option<&[MaskSample]>,
    max_coords: usize,
) -> GradCheckReport {
    model.params_mut().zero_grads();
    model
        .loss_and_grads_masked(batch, masks)
        .expect("finite loss");
    let analytic = model.params().flat_grads();
    let n = model.params().flat_len();
    let cfg = GradCheckConfig {
        max_coords,
        ..GradCheckConfig::default()
    };
    grad_check(
        model,
        n,
        |m, i| m.params().flat_get(i),
        |m, i, v| m.params_mut().flat_set(i, v),
        |m| m.batch_loss_masked(batch, masks),
        &analytic,
        &cfg,
    )
}
