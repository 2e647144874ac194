//! Per-word importance scores and dropout probabilities.
//!
//! For word `w` and class `c` with occurrence count `n_cw`, other-class
//! count `n_ocw` and class token totals `tot_c` / `tot_oc`, the smoothed
//! count-ratio weight is
//!
//! ```text
//! ratio = ((n_cw + alpha) / tot_c) / ((n_ocw + alpha) / tot_oc)
//! ```
//!
//! multiplied by a frequency factor `ln(n_cw) / ln(1/beta)` (zero for
//! `n_cw <= 1`) that keeps rare words from being scored as important. The
//! per-word importance score is the maximum over classes, and the dropout
//! probability compresses it into `[0, 1)` via `p(r) = (e^r - 1)/(e^r + 1)`.
//!
//! Note the frequency factor is implemented as `ln(n)/ln(1/beta)`, i.e. the
//! magnitude of a base-`beta` logarithm: positive and strictly increasing in
//! `n` for `0 < beta < 1`, so higher-frequency evidence raises the score and
//! smaller `beta` damps all scores uniformly.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{ClassCounts, Dataset};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("smoothing constant alpha must be > 0, got {0}")]
    BadAlpha(f64),
    #[error("frequency-factor base beta must lie in (0, 1), got {0}")]
    BadBeta(f64),
    #[error("class {0} has no tokens")]
    EmptyClass(usize),
    #[error("scoring needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("zipf fit needs at least {needed} words with positive probability, got {got}")]
    InsufficientSupport { needed: usize, got: usize },
}

/// Smoothing constant and frequency-factor base.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoringConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl ScoringConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<ScoringConfig, ScoringError> {
        let cfg = ScoringConfig { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(ScoringError::BadAlpha(self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ScoringError::BadBeta(self.beta));
        }
        Ok(())
    }
}

/// Smoothed ratio of a word's relative frequency in class `c` versus the
/// other classes pooled.
pub fn nb_weight(
    n_cw: u64,
    n_ocw: u64,
    tot_c: u64,
    tot_oc: u64,
    alpha: f64,
) -> Result<f64, ScoringError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(ScoringError::BadAlpha(alpha));
    }
    if tot_c == 0 {
        return Err(ScoringError::EmptyClass(0));
    }
    if tot_oc == 0 {
        return Err(ScoringError::EmptyClass(1));
    }
    let num = (n_cw as f64 + alpha) / tot_c as f64;
    let den = (n_ocw as f64 + alpha) / tot_oc as f64;
    Ok(num / den)
}

/// Frequency factor `ln(n)/ln(1/beta)`; zero for `n <= 1` (a single
/// occurrence carries no frequency evidence).
pub fn freq_factor(n_cw: u64, beta: f64) -> Result<f64, ScoringError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ScoringError::BadBeta(beta));
    }
    if n_cw <= 1 {
        return Ok(0.0);
    }
    Ok((n_cw as f64).ln() / (1.0 / beta).ln())
}

/// Full per-class score: count-ratio weight times frequency factor, clamped
/// at zero.
pub fn class_score(
    n_cw: u64,
    n_ocw: u64,
    tot_c: u64,
    tot_oc: u64,
    config: &ScoringConfig,
) -> Result<f64, ScoringError> {
    let w = nb_weight(n_cw, n_ocw, tot_c, tot_oc, config.alpha)?;
    let f = freq_factor(n_cw, config.beta)?;
    Ok((w * f).max(0.0))
}

/// The importance score of a word is the maximum of its per-class scores.
pub fn importance(scores_by_class: &[f64]) -> Result<f64, ScoringError> {
    if scores_by_class.len() < 2 {
        return Err(ScoringError::TooFewClasses(scores_by_class.len()));
    }
    Ok(scores_by_class.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Largest f64 strictly below 1, the cap that keeps probabilities in `[0, 1)`
/// once `e^r` saturates.
const MAX_PROB: f64 = 1.0 - f64::EPSILON / 2.0;

/// Compresses a non-negative score into `[0, 1)`:
/// `p(r) = (e^r - 1)/(e^r + 1)`, computed as `1 - 2/(e^r + 1)` so large `r`
/// saturates to just below 1 instead of overflowing.
pub fn drop_prob(r: f64) -> f64 {
    debug_assert!(r >= 0.0 && !r.is_nan(), "scores are clamped non-negative");
    let p = 1.0 - 2.0 / (r.exp() + 1.0);
    p.min(MAX_PROB)
}

/// Scores for one word: per-class scores, their max, and the dropout
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WordScores {
    pub by_class: Vec<f64>,
    pub score: f64,
    pub prob: f64,
}

/// Per-word importance scores and dropout probabilities for one training
/// split, with the provenance needed to audit that no test data leaked in.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    entries: BTreeMap<String, WordScores>,
    pub config: ScoringConfig,
    /// Fingerprint of the split the counts were built from.
    pub corpus_fingerprint: String,
    pub num_classes: usize,
}

impl ImportanceTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&WordScores> {
        self.entries.get(word)
    }

    /// Dropout probability of a word; words unseen in training are never
    /// dropped.
    pub fn prob(&self, word: &str) -> f64 {
        self.entries.get(word).map_or(0.0, |e| e.prob)
    }

    /// Importance score of a word; zero for unseen words.
    pub fn score(&self, word: &str) -> f64 {
        self.entries.get(word).map_or(0.0, |e| e.score)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WordScores)> {
        self.entries.iter().map(|(w, s)| (w.as_str(), s))
    }

    /// The `k` words with the highest importance score, descending, ties
    /// broken lexicographically.
    pub fn top_words(&self, k: usize) -> Vec<&str> {
        let mut words: Vec<(&str, f64)> = self
            .entries
            .iter()
            .map(|(w, s)| (w.as_str(), s.score))
            .collect();
        words.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        words.into_iter().take(k).map(|(w, _)| w).collect()
    }

    /// TSV dump: `word<TAB>score_c0..score_cN<TAB>max_score<TAB>prob`, one
    /// row per word, sorted by probability descending (ties by word).
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&str, &WordScores)> = self.iter().collect();
        rows.sort_by(|a, b| b.1.prob.partial_cmp(&a.1.prob).unwrap().then(a.0.cmp(b.0)));
        let mut out = String::new();
        for (word, s) in rows {
            out.push_str(word);
            for v in &s.by_class {
                write!(out, "\t{v}").unwrap();
            }
            writeln!(out, "\t{}\t{}", s.score, s.prob).unwrap();
        }
        out
    }
}

/// Builds the importance table from training-split class counts.
pub fn build_table(
    counts: &ClassCounts,
    config: &ScoringConfig,
) -> Result<ImportanceTable, ScoringError> {
    config.validate()?;
    let c = counts.num_classes();
    if c < 2 {
        return Err(ScoringError::TooFewClasses(c));
    }
    for (class, &tot) in counts.totals.iter().enumerate() {
        if tot == 0 {
            return Err(ScoringError::EmptyClass(class));
        }
    }
    let grand_total: u64 = counts.totals.iter().sum();
    let mut entries = BTreeMap::new();
    for word in counts.vocabulary() {
        let mut by_class = Vec::with_capacity(c);
        let total_cw: u64 = (0..c).map(|cl| counts.count(cl, word)).sum();
        for class in 0..c {
            let n_cw = counts.count(class, word);
            let n_ocw = total_cw - n_cw;
            let tot_c = counts.totals[class];
            let tot_oc = grand_total - tot_c;
            by_class.push(class_score(n_cw, n_ocw, tot_c, tot_oc, config)?);
        }
        let score = importance(&by_class)?;
        entries.insert(
            word.to_string(),
            WordScores {
                by_class,
                score,
                prob: drop_prob(score),
            },
        );
    }
    Ok(ImportanceTable {
        entries,
        config: *config,
        corpus_fingerprint: counts.fingerprint.clone(),
        num_classes: c,
    })
}

/// The `k` highest-scored words for one class, descending, ties broken
/// lexicographically.
pub fn top_keywords(table: &ImportanceTable, class: usize, k: usize) -> Vec<String> {
    let mut words: Vec<(&str, f64)> = table
        .iter()
        .map(|(w, s)| (w, s.by_class[class]))
        .collect();
    words.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    words.into_iter().take(k).map(|(w, _)| w.to_string()).collect()
}

/// Deletes the `k` top-scored words of the table from every example of the
/// dataset (the top-k "apparent word" ablation).
pub fn remove_top_k(data: &Dataset, table: &ImportanceTable, k: usize) -> Dataset {
    let words: HashSet<&str> = table.top_words(k).into_iter().collect();
    data.remove_words(&words)
}

/// Least-squares fit of `ln(prob)` against `ln(rank)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ZipfFit {
    pub slope: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Fits `ln(p)` vs `ln(rank)` over the positive entries of `probs`, ranked
/// by descending probability (rank 1 = largest). A slope near -1 means the
/// probability profile follows a Zipf distribution.
pub fn fit_zipf(probs: &[f64]) -> Result<ZipfFit, ScoringError> {
    let mut positive: Vec<f64> = probs.iter().copied().filter(|&p| p > 0.0).collect();
    if positive.len() < 3 {
        return Err(ScoringError::InsufficientSupport {
            needed: 3,
            got: positive.len(),
        });
    }
    positive.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n = positive.len() as f64;
    let points: Vec<(f64, f64)> = positive
        .iter()
        .enumerate()
        .map(|(i, &p)| (((i + 1) as f64).ln(), p.ln()))
        .collect();
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    // a flat profile is fit perfectly by the constant line
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ZipfFit {
        slope,
        r_squared,
        n_points: positive.len(),
    })
}

/// Zipf fit of the table's dropout probabilities against probability rank.
/// Errors when fewer than 3 words have positive probability.
pub fn zipf_diagnostic(table: &ImportanceTable) -> Result<ZipfFit, ScoringError> {
    let probs: Vec<f64> = table.iter().map(|(_, s)| s.prob).collect();
    fit_zipf(&probs)
}

/// Builds the table directly from a training split with the given config.
pub fn table_from_dataset(
    train: &Dataset,
    config: &ScoringConfig,
) -> Result<Arc<ImportanceTable>, ScoringError> {
    Ok(Arc::new(build_table(&crate::corpus::build_counts(train), config)?))
}
