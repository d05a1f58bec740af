//! Binary model checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic    8 bytes   "RQCKPT01"
//! hlen     u64 LE    length of the JSON header
//! header   hlen bytes, UTF-8 JSON: spec, vocabulary tokens, embedding
//!          mode/trainable flag, and the name + shape of every tensor
//! payload  f64 LE    embedding matrix, then each tensor in header order
//! ```
//!
//! Floats are stored as raw bits, so save → load → save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{NamedTensor, ParameterSet};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::vocab_embed::{EmbeddingMode, EmbeddingTable, Vocabulary};

const MAGIC: &[u8; 8] = b"RQCKPT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub vocab: Vocabulary,
    pub params: ParameterSet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    vocab: Vocabulary,
    embedding_mode: EmbeddingMode,
    embedding_trainable: bool,
    embedding_shape: Vec<usize>,
    tensors: Vec<(String, Vec<usize>)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            spec: self.spec,
            vocab: self.vocab.clone(),
            embedding_mode: self.params.embedding.mode,
            embedding_trainable: self.params.embedding.trainable,
            embedding_shape: self.params.embedding.matrix.shape().to_vec(),
            tensors: self
                .params
                .tensors
                .iter()
                .map(|t| (t.name.clone(), t.value.shape().to_vec()))
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let all = std::iter::once(&self.params.embedding.matrix).chain(self.params.tensors.iter().map(|t| &t.value));
        for t in all {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        let mut payload = &body[hlen..];

        let mut take = |shape: &[usize]| -> Result<Tensor> {
            let n: usize = shape.iter().product();
            if payload.len() < 8 * n {
                return Err(bad("truncated payload"));
            }
            let data = payload[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            payload = &payload[8 * n..];
            Tensor::new(shape.to_vec(), data)
        };

        let matrix = take(&header.embedding_shape)?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for (name, shape) in &header.tensors {
            tensors.push(NamedTensor {
                name: name.clone(),
                value: take(shape)?,
            });
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        let params = ParameterSet {
            embedding: EmbeddingTable {
                matrix,
                mode: header.embedding_mode,
                trainable: header.embedding_trainable,
            },
            tensors,
        };
        params.check(&header.spec)?;
        Ok(Checkpoint {
            spec: header.spec,
            vocab: header.vocab,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
