//! Synthetic two-class corpus generator for desk-scale experiments.
//!
//! Every sentence carries up to two kinds of class evidence on top of a
//! shared Zipfian noise background:
//!
//! * a *strong* keyword (one per class, high frequency, moderately
//!   predictive) present in most sentences — the apparent feature a
//!   classifier can latch onto;
//! * a *weak* keyword drawn from a large per-class pool (each pool word is
//!   rare but highly predictive) — the inapparent feature that word
//!   dropout on the strong evidence should force the model to learn.
//!
//! A classifier that only exploits the strong keywords stalls well below
//! the accuracy available to one that also reads the weak ones.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Example};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub train_n: usize,
    pub test_n: usize,
    pub seed: u64,
    /// Probability a sentence contains a strong keyword.
    pub strong_present: f64,
    /// Probability the strong keyword matches the sentence class.
    pub strong_fidelity: f64,
    pub weak_present: f64,
    pub weak_fidelity: f64,
    /// Distinct weak keywords per class.
    pub weak_pool: usize,
    /// Rate of class-agnostic background occurrences of weak words. This
    /// keeps every weak word present in both classes, bounding its count
    /// ratio the way incidental usage does in real text.
    pub weak_background: f64,
    pub noise_vocab: usize,
    pub zipf_exponent: f64,
    pub len_min: usize,
    pub len_max: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_n: 2000,
            test_n: 500,
            seed: 17,
            strong_present: 0.75,
            strong_fidelity: 0.95,
            weak_present: 0.95,
            weak_fidelity: 0.97,
            weak_pool: 120,
            weak_background: 0.06,
            noise_vocab: 100,
            zipf_exponent: 1.05,
            len_min: 7,
            len_max: 11,
        }
    }
}

/// Zipfian sampler over `0..n` by inverse-CDF on precomputed weights.
struct ZipfSampler {
    cumulative: Vec<f64>,
}

impl ZipfSampler {
    fn new(n: usize, exponent: f64) -> ZipfSampler {
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += 1.0 / ((k + 1) as f64).powf(exponent);
            cumulative.push(acc);
        }
        ZipfSampler { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let r = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c < r)
    }
}

/// Generates the train and test splits. Class labels alternate so both
/// splits are balanced; all randomness comes from the config seed.
pub fn generate(cfg: &SynthConfig) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipf = ZipfSampler::new(cfg.noise_vocab, cfg.zipf_exponent);
    let mut make_split = |n: usize, name: &str| {
        let examples = (0..n)
            .map(|i| {
                let class = i % 2;
                Example {
                    label: class,
                    tokens: sentence(cfg, class, &zipf, &mut rng),
                }
            })
            .collect();
        Dataset {
            name: name.to_string(),
            examples,
            label_names: vec!["pos".to_string(), "neg".to_string()],
        }
    };
    let train = make_split(cfg.train_n, "synth-train");
    let test = make_split(cfg.test_n, "synth-test");
    (train, test)
}

fn sentence(cfg: &SynthConfig, class: usize, zipf: &ZipfSampler, rng: &mut impl Rng) -> Vec<String> {
    let len = rng.random_range(cfg.len_min..=cfg.len_max);
    let mut tokens = Vec::with_capacity(len);
    if rng.random::<f64>() < cfg.strong_present {
        let c = pick_class(class, cfg.strong_fidelity, rng);
        tokens.push(format!("strong{c}"));
    }
    if rng.random::<f64>() < cfg.weak_present {
        let c = pick_class(class, cfg.weak_fidelity, rng);
        let idx = rng.random_range(0..cfg.weak_pool);
        tokens.push(format!("weak{c}_{idx:03}"));
    }
    if rng.random::<f64>() < cfg.weak_background {
        let c = rng.random_range(0..2usize);
        let idx = rng.random_range(0..cfg.weak_pool);
        tokens.push(format!("weak{c}_{idx:03}"));
    }
    while tokens.len() < len {
        tokens.push(format!("noise{:03}", zipf.sample(rng)));
    }
    tokens.shuffle(rng);
    tokens
}

fn pick_class(class: usize, fidelity: f64, rng: &mut impl Rng) -> usize {
    if rng.random::<f64>() < fidelity {
        class
    } else {
        1 - class
    }
}
