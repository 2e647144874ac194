//! The training loop: seeded shuffling, minibatch Adam, per-epoch dev
//! evaluation with early stopping, best-checkpoint restore, and a single
//! test evaluation at the end.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Vocabulary};
use crate::dropout::DropoutPolicy;
use crate::models::{encode_dataset, EncodedExample, Model, ModelConfig, ModelError};
use crate::nn::pretrained::load_embeddings_text;
use crate::scoring::ImportanceTable;

use super::spec::{PolicySpec, TrainParams};
use super::HarnessError;

/// One resolved train/dev/test split.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

/// Everything a single run reports. `canonical_json` strips the wall time,
/// which is the one field that legitimately varies between identical runs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub model: ModelConfig,
    pub policy: PolicySpec,
    pub epochs: Vec<EpochStat>,
    pub best_dev_accuracy: f64,
    pub best_epoch: usize,
    pub test_accuracy: f64,
    pub stopped_early: bool,
    /// Fingerprint of the training split the run used.
    pub train_fingerprint: String,
    /// Fingerprint of the split the importance table was fitted on
    /// (table mode only); must equal `train_fingerprint`.
    pub table_fingerprint: Option<String>,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// Deterministic serialization: identical spec + seed must reproduce
    /// these bytes exactly, so the wall time is zeroed out.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        clone.wall_time_s = 0.0;
        serde_json::to_string_pretty(&clone).expect("report serializes")
    }

    /// Per-epoch table as TSV.
    pub fn epochs_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tdev_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.train_loss, e.dev_accuracy));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on dev accuracy. Ties go to the earlier
/// epoch (only a strict improvement resets the counter).
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        assert!(patience >= 1);
        EarlyStopper {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, dev_accuracy: f64) -> StopDecision {
        if dev_accuracy > self.best {
            self.best = dev_accuracy;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// Fraction of examples whose argmax prediction matches the label,
/// sequentially.
pub fn evaluate_accuracy_seq(model: &Model, data: &[EncodedExample]) -> f64 {
    assert!(!data.is_empty(), "cannot evaluate on an empty split");
    let correct = data
        .iter()
        .filter(|ex| model.predict(&ex.ids).label == ex.label)
        .count();
    correct as f64 / data.len() as f64
}

/// Parallel batch evaluation; parameters are read-only so examples fan out
/// across the rayon pool. The count reduction is exact, so the result is
/// identical to the sequential path.
#[cfg(feature = "parallel")]
pub fn evaluate_accuracy_par(model: &Model, data: &[EncodedExample]) -> f64 {
    use rayon::prelude::*;
    assert!(!data.is_empty(), "cannot evaluate on an empty split");
    let correct = data
        .par_iter()
        .filter(|ex| model.predict(&ex.ids).label == ex.label)
        .count();
    correct as f64 / data.len() as f64
}

/// Batch evaluation with whichever execution mode the build provides.
pub fn evaluate_accuracy(model: &Model, data: &[EncodedExample]) -> f64 {
    #[cfg(feature = "parallel")]
    {
        evaluate_accuracy_par(model, data)
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate_accuracy_seq(model, data)
    }
}

/// Output of one training run.
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model: Model,
    pub vocab: Vocabulary,
    /// The importance table the run trained with (table mode only).
    pub table: Option<Arc<ImportanceTable>>,
}

/// Trains one model on one split with one seed. Fully deterministic: the
/// seed fixes parameter init, epoch shuffling, and all dropout noise
/// through three independent ChaCha streams. The run itself is
/// single-threaded.
pub fn train_split(
    model_cfg: &ModelConfig,
    policy_spec: &PolicySpec,
    params: &TrainParams,
    split: &SplitData,
    seed: u64,
    embeddings: Option<&Path>,
) -> Result<TrainOutcome, HarnessError> {
    params.validate()?;
    let started = Instant::now();

    let vocab = Vocabulary::from_dataset(&split.train);
    // the policy (and its importance table) sees the training split only
    let policy = policy_spec.resolve(&split.train)?;
    let table = match &policy {
        DropoutPolicy::Table(t) => Some(Arc::clone(t)),
        _ => None,
    };
    let classes = split.train.num_classes();

    let train_enc = encode_dataset(&split.train, &vocab, &policy);
    let eval_policy = policy.eval_mode();
    let dev_enc = encode_dataset(&split.dev, &vocab, &eval_policy);
    let test_enc = encode_dataset(&split.test, &vocab, &eval_policy);

    let mut init_rng = stream_rng(seed, 0);
    let mut shuffle_rng = stream_rng(seed, 1);
    let mut noise_rng = stream_rng(seed, 2);

    let mut model = match embeddings {
        None => Model::build(model_cfg, vocab.len(), classes, &mut init_rng)
            .map_err(|e| HarnessError::Config(e.to_string()))?,
        Some(path) => {
            let (emb, _found) =
                load_embeddings_text(path, vocab.words(), model_cfg.embed_dim, &mut init_rng)?;
            Model::build_with_embeddings(model_cfg, vocab.len(), classes, emb, &mut init_rng)
                .map_err(|e| HarnessError::Config(e.to_string()))?
        }
    };

    let mut stopper = EarlyStopper::new(params.patience);
    let mut epochs = Vec::new();
    let mut best_snapshot = model.params().snapshot();
    let mut stopped_early = false;
    let mut step: u64 = 0;
    let n_train = train_enc.len();
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=params.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(params.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train_enc[i]).collect();
            model.params_mut().zero_grads();
            let loss = model
                .loss_and_grads(&batch, &mut noise_rng)
                .map_err(|e| match e {
                    ModelError::NonFiniteLoss => HarnessError::Diverged { epoch },
                    other => HarnessError::Config(other.to_string()),
                })?;
            step += 1;
            model.params_mut().adam_step(&params.adam, step);
            loss_sum += loss.total * chunk.len() as f64;
        }
        let train_loss = loss_sum / n_train as f64;
        if !train_loss.is_finite() {
            return Err(HarnessError::Diverged { epoch });
        }
        let dev_accuracy = evaluate_accuracy_seq(&model, &dev_enc);
        epochs.push(EpochStat {
            epoch,
            train_loss,
            dev_accuracy,
        });
        match stopper.observe(epoch, dev_accuracy) {
            StopDecision::Improved => {
                best_snapshot = model.params().snapshot();
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    model.params_mut().restore(&best_snapshot);
    let test_accuracy = evaluate_accuracy_seq(&model, &test_enc);

    let report = TrainReport {
        seed,
        model: model_cfg.clone(),
        policy: policy_spec.clone(),
        epochs,
        best_dev_accuracy: stopper.best,
        best_epoch: stopper.best_epoch,
        test_accuracy,
        stopped_early,
        train_fingerprint: split.train.fingerprint(),
        table_fingerprint: table.as_ref().map(|t| t.corpus_fingerprint.clone()),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        model,
        vocab,
        table,
    })
}

/// Independent deterministic rng streams derived from one seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopper_flat_from_first_epoch_stops_at_patience_plus_one() {
        let mut s = EarlyStopper::new(10);
        assert_eq!(s.observe(1, 0.5), StopDecision::Improved);
        for epoch in 2..=10 {
            assert_eq!(s.observe(epoch, 0.5), StopDecision::Continue, "epoch {epoch}");
        }
        assert_eq!(s.observe(11, 0.5), StopDecision::Stop);
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn stopper_never_triggers_on_strict_improvement() {
        let mut s = EarlyStopper::new(10);
        for epoch in 1..=100 {
            assert_eq!(
                s.observe(epoch, epoch as f64 * 0.001),
                StopDecision::Improved
            );
        }
        assert_eq!(s.best_epoch, 100);
    }

    #[test]
    fn stopper_ties_keep_earlier_epoch() {
        let mut s = EarlyStopper::new(3);
        s.observe(1, 0.7);
        assert_eq!(s.observe(2, 0.7), StopDecision::Continue);
        assert_eq!(s.best_epoch, 1);
        s.observe(3, 0.8);
        assert_eq!(s.best_epoch, 3);
    }

    #[test]
    fn stream_rngs_are_independent_and_deterministic() {
        use rand::Rng;
        let a: Vec<u64> = (0..4).map({
            let mut r = stream_rng(7, 0);
            move |_| r.random()
        })
        .collect();
        let b: Vec<u64> = (0..4).map({
            let mut r = stream_rng(7, 1);
            move |_| r.random()
        })
        .collect();
        assert_ne!(a, b);
        let a2: Vec<u64> = (0..4).map({
            let mut r = stream_rng(7, 0);
            move |_| r.random()
        })
        .collect();
        assert_eq!(a, a2);
    }
}
