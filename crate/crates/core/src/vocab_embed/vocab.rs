use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::TokenSequence;

pub const PAD_ID: usize = 0;
pub const OOV_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// Token ↔ id map. Ids 0 and 1 are reserved for padding and unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let id_of = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, id_of }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Ranks tokens by descending frequency, ties in lexicographic order,
    /// and numbers them from 2.
    pub fn build<'a>(sequences: impl IntoIterator<Item = &'a TokenSequence>) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            for t in seq.iter() {
                *freq.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        // BTreeMap order is lexicographic; a stable sort keeps it within equal counts
        ranked.sort_by(|a, b| b.1.cmp(&a.1));

        let mut tokens = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
        tokens.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Vocabulary::from(tokens)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Corpus tokens in id order (ids 2..).
    pub fn corpus_tokens(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens.iter().enumerate().skip(2).map(|(i, t)| (i, t.as_str()))
    }
}

/// Fixed-length id vector, pre-padded with [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedSequence(pub Vec<usize>);

impl EncodedSequence {
    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maps tokens to ids (unknown → OOV), keeps the last `max_len` tokens of
/// long sequences and left-pads short ones with zeros.
pub fn encode(tokens: &TokenSequence, vocab: &Vocabulary, max_len: usize) -> Result<EncodedSequence> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let skip = tokens.len().saturating_sub(max_len);
    let mut ids = vec![PAD_ID; max_len - (tokens.len() - skip)];
    ids.extend(tokens.iter().skip(skip).map(|t| vocab.id(t).unwrap_or(OOV_ID)));
    Ok(EncodedSequence(ids))
}

/// Nearest-rank percentile of sequence lengths, capped at `cap` and never
/// below `floor`.
pub fn length_percentile(lengths: &[usize], percentile: f64, cap: usize, floor: usize) -> usize {
    if lengths.is_empty() {
        return floor.max(1);
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let rank = ((percentile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1].min(cap).max(floor).max(1)
}
