//! Dataset ingestion, tokenization, vocabulary and class-count construction,
//! and cross-validation splits.
//!
//! The input format is UTF-8 TSV: one example per line as `label<TAB>text`,
//! with `#`-prefixed lines ignored. Labels are arbitrary strings and are
//! densified to `0..c-1` in first-appearance order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `label<TAB>text`")]
    MalformedLine { line: usize },
    #[error("line {line}: empty text after tokenization")]
    EmptyText { line: usize },
    #[error("no examples in dataset")]
    NoExamples,
    #[error("vocabulary word list must start with the empty padding token")]
    BadVocabulary,
    #[error("fold count {k} invalid for {n} examples (need 2 <= k <= n)")]
    BadFoldCount { k: usize, n: usize },
}

/// One labelled sentence. `label` is a dense class id in `0..c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub label: usize,
    pub tokens: Vec<String>,
}

/// A labelled corpus with a dense label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<Example>,
    /// Original label strings, indexed by dense id.
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Stable content hash of the corpus (name excluded), used to record
    /// which split an importance table or report was fitted on.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.label_names {
            hasher.update(name.as_bytes());
            hasher.update([0xff]);
        }
        for ex in &self.examples {
            hasher.update(ex.label.to_le_bytes());
            for tok in &ex.tokens {
                hasher.update(tok.as_bytes());
                hasher.update([0x00]);
            }
            hasher.update([0xfe]);
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(32);
        for byte in &digest[..16] {
            write!(out, "{byte:02x}").unwrap();
        }
        out
    }

    /// Serializes back to the TSV input format (joining tokens with single
    /// spaces). Reloading the result reproduces the token lists exactly.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&self.label_names[ex.label]);
            out.push('\t');
            out.push_str(&ex.tokens.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_tsv()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn subset(&self, indices: &[usize], name: &str) -> Dataset {
        Dataset {
            name: name.to_string(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            label_names: self.label_names.clone(),
        }
    }

    /// Deletes every occurrence of the given words from all examples.
    /// Examples left empty by the removal are kept as empty token lists.
    pub fn remove_words(&self, words: &HashSet<&str>) -> Dataset {
        let examples = self
            .examples
            .iter()
            .map(|ex| Example {
                label: ex.label,
                tokens: ex
                    .tokens
                    .iter()
                    .filter(|t| !words.contains(t.as_str()))
                    .cloned()
                    .collect(),
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            examples,
            label_names: self.label_names.clone(),
        }
    }
}

/// Splits on Unicode whitespace, optionally case-folding. No other
/// normalization: punctuation stays attached to its token.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            if lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Loads a TSV dataset (`label<TAB>text` per line). Blank lines and lines
/// starting with `#` are skipped. Labels are densified in first-appearance
/// order.
pub fn load_dataset(path: &Path, lowercase: bool) -> Result<Dataset, CorpusError> {
    let content = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_tsv(&content, &name, lowercase)
}

/// Parses TSV content; see [`load_dataset`].
pub fn parse_tsv(content: &str, name: &str, lowercase: bool) -> Result<Dataset, CorpusError> {
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut examples = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or(CorpusError::MalformedLine { line: line_no })?;
        let tokens = tokenize(text, lowercase);
        if tokens.is_empty() {
            return Err(CorpusError::EmptyText { line: line_no });
        }
        let next_id = label_names.len();
        let label_id = *label_ids.entry(label.to_string()).or_insert_with(|| {
            label_names.push(label.to_string());
            next_id
        });
        examples.push(Example {
            label: label_id,
            tokens,
        });
    }
    if examples.is_empty() {
        return Err(CorpusError::NoExamples);
    }
    Ok(Dataset {
        name: name.to_string(),
        examples,
        label_names,
    })
}

/// Word/index bijection. Index 0 is the padding token (the empty string,
/// which whitespace tokenization can never produce); it is never scored and
/// out-of-vocabulary tokens map to it.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

pub const PAD_INDEX: usize = 0;

impl Vocabulary {
    /// Rebuilds a vocabulary from its word list (checkpoint loading).
    /// The first word must be the empty padding token.
    pub fn from_words(words: Vec<String>) -> Result<Vocabulary, CorpusError> {
        if words.first().map(String::as_str) != Some("") {
            return Err(CorpusError::BadVocabulary);
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocabulary { words, index })
    }

    /// Builds the vocabulary from a training split, in first-appearance
    /// order of tokens.
    pub fn from_dataset(train: &Dataset) -> Vocabulary {
        let mut words = vec![String::new()];
        let mut index = HashMap::new();
        index.insert(String::new(), PAD_INDEX);
        for ex in &train.examples {
            for tok in &ex.tokens {
                if !index.contains_key(tok) {
                    index.insert(tok.clone(), words.len());
                    words.push(tok.clone());
                }
            }
        }
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Maps tokens to indices, sending unknown words to the padding index.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t).unwrap_or(PAD_INDEX))
            .collect()
    }
}

/// Per-class token occurrence counts. `counts[c][w]` is the number of times
/// word `w` occurs in class `c`; `totals[c]` is the total token count of the
/// class. Built from the training split only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    pub counts: Vec<BTreeMap<String, u64>>,
    pub totals: Vec<u64>,
    /// Fingerprint of the split the counts were built from.
    pub fingerprint: String,
}

impl ClassCounts {
    pub fn num_classes(&self) -> usize {
        self.totals.len()
    }

    pub fn count(&self, class: usize, word: &str) -> u64 {
        self.counts[class].get(word).copied().unwrap_or(0)
    }

    /// All words observed in any class, in lexicographic order.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self
            .counts
            .iter()
            .flat_map(|m| m.keys().map(|s| s.as_str()))
            .collect();
        words.sort_unstable();
        words.dedup();
        words
    }
}

/// Token-level occurrence counts per class over the training split.
pub fn build_counts(train: &Dataset) -> ClassCounts {
    let c = train.num_classes();
    let mut counts = vec![BTreeMap::new(); c];
    let mut totals = vec![0u64; c];
    for ex in &train.examples {
        totals[ex.label] += ex.tokens.len() as u64;
        let class = &mut counts[ex.label];
        for tok in &ex.tokens {
            *class.entry(tok.clone()).or_insert(0) += 1;
        }
    }
    ClassCounts {
        counts,
        totals,
        fingerprint: train.fingerprint(),
    }
}

/// One train/dev/test triple of a cross-validation split.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

/// Deterministic k-fold split. Example indices are shuffled once with the
/// seed and partitioned into k cells; triple `i` uses cell `i` as the test
/// set and carves a dev set of fraction `1/k` (at least one example) from
/// the remainder.
pub fn cv_split(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>, CorpusError> {
    let n = data.len();
    if k < 2 || k > n {
        return Err(CorpusError::BadFoldCount { k, n });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut folds = Vec::with_capacity(k);
    for i in 0..k {
        let lo = i * n / k;
        let hi = (i + 1) * n / k;
        let test_idx = &indices[lo..hi];
        let rest: Vec<usize> = indices[..lo]
            .iter()
            .chain(&indices[hi..])
            .copied()
            .collect();
        let dev_len = (rest.len() / k).max(1);
        let (dev_idx, train_idx) = rest.split_at(dev_len);
        folds.push(Fold {
            train: data.subset(train_idx, &format!("{}-fold{}-train", data.name, i)),
            dev: data.subset(dev_idx, &format!("{}-fold{}-dev", data.name, i)),
            test: data.subset(test_idx, &format!("{}-fold{}-test", data.name, i)),
        });
    }
    Ok(folds)
}

/// Carves a dev set of the given fraction off a training set, shuffled by
/// seed. Used when the dataset ships a fixed test split and no dev set.
pub fn carve_dev(train: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let n = train.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let dev_len = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let (dev_idx, train_idx) = indices.split_at(dev_len);
    (
        train.subset(train_idx, &format!("{}-train", train.name)),
        train.subset(dev_idx, &format!("{}-dev", train.name)),
    )
}
