use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Half-width of the uniform initializer for corpus-trained embeddings.
pub const EMBED_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Random init, learned jointly with the classifier.
    CorpusTrained,
    /// Vectors read from a GloVe-style file and kept frozen.
    PretrainedStatic,
}

impl EmbeddingMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingMode::CorpusTrained => "corpus",
            EmbeddingMode::PretrainedStatic => "pretrained",
        }
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corpus" | "corpus_trained" | "keras" => Ok(EmbeddingMode::CorpusTrained),
            "pretrained" | "pretrained_static" | "glove" => Ok(EmbeddingMode::PretrainedStatic),
            other => Err(format!("unknown embedding mode {other:?} (expected corpus or pretrained)")),
        }
    }
}

/// `vocab size × dim` lookup table. Row 0 belongs to padding and is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub mode: EmbeddingMode,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn lookup(&self, id: usize) -> &[f64] {
        self.matrix.row_slice(id)
    }
}

/// Uniform `[-0.05, 0.05]` rows from a seeded generator, zero padding row.
pub fn init_corpus_trained(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_corpus_trained_with(vocab.size(), dim, &mut rng)
}

pub(crate) fn init_corpus_trained_with<R: Rng>(size: usize, dim: usize, rng: &mut R) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be at least 1".into()));
    }
    let mut matrix = Tensor::zeros(&[size, dim]);
    for r in 0..size {
        if r == PAD_ID {
            continue;
        }
        for v in matrix.row_slice_mut(r) {
            *v = rng.gen_range(-EMBED_INIT_RANGE..=EMBED_INIT_RANGE);
        }
    }
    Ok(EmbeddingTable {
        matrix,
        mode: EmbeddingMode::CorpusTrained,
        trainable: true,
    })
}

/// Word vectors read from a text file, restricted to a set of wanted tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
    pub lines_read: usize,
}

impl PretrainedVectors {
    /// Reads `token v1 … v_dim` lines. Every line is validated; only tokens
    /// in `wanted` (or all tokens when `wanted` is `None`) are kept.
    pub fn load(path: impl AsRef<Path>, wanted: Option<&HashSet<String>>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), wanted)
    }

    pub fn read<R: BufRead>(reader: R, wanted: Option<&HashSet<String>>) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        let mut lines_read = 0;
        let mut parsed = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| Error::EmbeddingFormat {
                line: line_no,
                message: e.to_string(),
            })?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let token = fields.next().unwrap_or_default();
            parsed.clear();
            for f in fields {
                let v: f64 = f.parse().map_err(|_| Error::EmbeddingFormat {
                    line: line_no,
                    message: format!("cannot parse {f:?} as a number"),
                })?;
                parsed.push(v);
            }
            let d = *dim.get_or_insert(parsed.len());
            if parsed.len() != d || d == 0 {
                return Err(Error::EmbeddingFormat {
                    line: line_no,
                    message: format!("expected {d} components, found {}", parsed.len()),
                });
            }
            lines_read += 1;
            if wanted.is_none_or(|w| w.contains(token)) {
                vectors.entry(token.to_string()).or_insert_with(|| parsed.clone());
            }
        }
        Ok(PretrainedVectors {
            dim: dim.unwrap_or(0),
            vectors,
            lines_read,
        })
    }

    /// Frozen table for `vocab`; tokens missing from the file, the padding
    /// row and the OOV row are zero.
    pub fn table_for(&self, vocab: &Vocabulary) -> Result<EmbeddingTable> {
        if self.dim == 0 {
            return Err(Error::EmbeddingFormat {
                line: 0,
                message: "vector file contains no vectors".into(),
            });
        }
        let mut matrix = Tensor::zeros(&[vocab.size(), self.dim]);
        for (id, token) in vocab.corpus_tokens() {
            if let Some(v) = self.vectors.get(token) {
                matrix.row_slice_mut(id).copy_from_slice(v);
            }
        }
        Ok(EmbeddingTable {
            matrix,
            mode: EmbeddingMode::PretrainedStatic,
            trainable: false,
        })
    }

    /// Fraction of corpus tokens in `vocab` that have a vector.
    pub fn coverage(&self, vocab: &Vocabulary) -> f64 {
        let total = vocab.size().saturating_sub(2);
        if total == 0 {
            return 0.0;
        }
        let hit = vocab
            .corpus_tokens()
            .filter(|(_, t)| self.vectors.contains_key(*t))
            .count();
        hit as f64 / total as f64
    }
}

pub fn load_pretrained(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let wanted: HashSet<String> = vocab.corpus_tokens().map(|(_, t)| t.to_string()).collect();
    PretrainedVectors::load(path, Some(&wanted))?.table_for(vocab)
}
