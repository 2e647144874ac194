//! Single-file binary checkpoints: versioned magic string, a JSON config
//! echo, then every parameter tensor with a shape header. Values are f64
//! little-endian, so save/load round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::nn::Tensor;

use super::{Model, ModelConfig};

const MAGIC: &[u8; 8] = b"GIDCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("config in checkpoint is invalid: {0}")]
    BadConfig(String),
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab_size: usize,
    classes: usize,
    vocab: Vec<String>,
    label_names: Vec<String>,
}

/// A loaded checkpoint: the model plus everything needed to run it on raw
/// text.
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub label_names: Vec<String>,
}

pub fn save_checkpoint(
    model: &Model,
    vocab: &Vocabulary,
    label_names: &[String],
    path: &Path,
) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let meta = Meta {
        config: model.config().clone(),
        vocab_size: model.vocab_size(),
        classes: model.classes(),
        vocab: vocab.words().to_vec(),
        label_names: label_names.to_vec(),
    };
    let meta_json = serde_json::to_vec(&meta).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params().iter() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &dim in p.value.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let meta_len = cur.u32()? as usize;
    let meta: Meta = serde_json::from_slice(cur.take(meta_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("config json: {e}")))?;

    // rebuild the parameter layout, then overwrite every tensor by name
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::build(&meta.config, meta.vocab_size, meta.classes, &mut rng)
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;

    let n_params = cur.u32()? as usize;
    if n_params != model.params().len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameters, file has {n_params}",
            model.params().len()
        )));
    }
    for _ in 0..n_params {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("parameter name not utf-8".into()))?;
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let v = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(CheckpointError::Corrupt(format!(
                    "non-finite value in parameter {name:?}"
                )));
            }
            data.push(v);
        }
        let param = model
            .params_mut()
            .find_mut(&name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("unknown parameter {name:?}")))?;
        if param.value.shape() != shape.as_slice() {
            return Err(CheckpointError::Corrupt(format!(
                "parameter {name:?} shape {:?} != stored {shape:?}",
                param.value.shape()
            )));
        }
        param.value = Tensor::from_vec(&shape, data);
    }
    let vocab = Vocabulary::from_words(meta.vocab)
        .map_err(|e| CheckpointError::Corrupt(format!("vocabulary: {e}")))?;
    if vocab.len() != model.vocab_size() {
        return Err(CheckpointError::Corrupt(
            "vocabulary length does not match the embedding table".into(),
        ));
    }
    Ok(Checkpoint {
        model,
        vocab,
        label_names: meta.label_names,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
