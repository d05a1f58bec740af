//! Vocabulary, fixed-length encoding and the two embedding modes.

mod embedding;
mod vocab;

pub use embedding::{
    init_corpus_trained, load_pretrained, EmbeddingMode, EmbeddingTable, PretrainedVectors,
    EMBED_INIT_RANGE,
};
#[cfg(test)]
pub(crate) use embedding::init_corpus_trained_with;
pub use vocab::{
    encode, length_percentile, EncodedSequence, Vocabulary, OOV_ID, OOV_TOKEN, PAD_ID, PAD_TOKEN,
};
