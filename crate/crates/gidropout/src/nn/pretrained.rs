//! Loader for text-format pretrained embeddings: one line per word,
//! `word v1 v2 ... vd` with space-separated decimals. Vocabulary words
//! absent from the file keep their random initialization.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use super::params::init_uniform;
use super::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values, got {got}")]
    WrongWidth {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: unparseable value {value:?}")]
    BadValue { line: usize, value: String },
}

/// Builds a `words.len() x dim` embedding matrix: random uniform(-0.25,
/// 0.25) init, rows overwritten for words found in the file, row 0 (the
/// padding word) forced to zero. Returns the matrix and how many words the
/// file covered.
pub fn load_embeddings_text(
    path: &Path,
    words: &[String],
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor, usize), EmbeddingError> {
    let content = std::fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let index: HashMap<&str, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut emb = init_uniform(&[words.len(), dim], 0.25, rng);
    emb.row_mut(0).fill(0.0);
    let mut found = 0;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap();
        let Some(&row) = index.get(word) else {
            continue;
        };
        if row == 0 {
            continue;
        }
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(EmbeddingError::WrongWidth {
                line: line_no,
                expected: dim,
                got: values.len(),
            });
        }
        for (k, v) in values.iter().enumerate() {
            let parsed: f64 = v.parse().map_err(|_| EmbeddingError::BadValue {
                line: line_no,
                value: v.to_string(),
            })?;
            if !parsed.is_finite() {
                return Err(EmbeddingError::BadValue {
                    line: line_no,
                    value: v.to_string(),
                });
            }
            emb.row_mut(row)[k] = parsed;
        }
        found += 1;
    }
    Ok((emb, found))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    #[test]
    fn loads_known_words_keeps_random_for_rest() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "good 1.0 2.0").unwrap();
        writeln!(file, "elsewhere 9.0 9.0").unwrap();
        let words: Vec<String> = vec!["".into(), "good".into(), "fun".into()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (emb, found) = load_embeddings_text(file.path(), &words, 2, &mut rng).unwrap();
        assert_eq!(found, 1);
        assert_eq!(emb.row(0), &[0.0, 0.0]);
        assert_eq!(emb.row(1), &[1.0, 2.0]);
        assert!(emb.row(2).iter().all(|v| v.abs() < 0.25 && *v != 0.0));
    }

    #[test]
    fn rejects_wrong_width() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "good 1.0").unwrap();
        let words: Vec<String> = vec!["".into(), "good".into()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = load_embeddings_text(file.path(), &words, 2, &mut rng);
        assert!(matches!(err, Err(EmbeddingError::WrongWidth { line: 1, .. })));
    }

    #[test]
    fn rejects_non_finite() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "good inf 2.0").unwrap();
        let words: Vec<String> = vec!["".into(), "good".into()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = load_embeddings_text(file.path(), &words, 2, &mut rng);
        assert!(matches!(err, Err(EmbeddingError::BadValue { .. })));
    }
}
