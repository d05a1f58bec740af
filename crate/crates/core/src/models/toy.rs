//! End-to-end gradient verification at toy size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::loss_and_gradients;
use super::params::ParameterSet;
use super::spec::{ModelKind, ModelSpec};
use crate::error::Result;
use crate::numerics::{gradient_check, GradCheckReport, Tensor};
use crate::vocab_embed::{EmbeddingMode, EmbeddingTable, EncodedSequence, PAD_ID};

pub const TOY_VOCAB: usize = 20;
pub const TOY_BATCH: usize = 3;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Half-width of the uniform range the check point is drawn from.
pub const GRADCHECK_RANGE: f64 = 0.5;

/// Vocab 20, embed 4, hidden 5, max_len 6, CNN 3 filters of width 2.
pub fn toy_spec(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        embedding_mode: EmbeddingMode::CorpusTrained,
        embed_dim: 4,
        hidden: 5,
        conv_filters: 3,
        conv_width: 2,
        max_len: 6,
    }
}

/// Random parameters for `spec` with every entry in `±GRADCHECK_RANGE`
/// except the PAD row, which stays zero.
pub fn random_point(spec: &ModelSpec, vocab: usize, rng: &mut impl Rng) -> Result<ParameterSet> {
    let mut table = Tensor::zeros(&[vocab, spec.embed_dim]);
    let mut params = ParameterSet::init(
        spec,
        EmbeddingTable {
            matrix: table.clone(),
            mode: EmbeddingMode::CorpusTrained,
            trainable: true,
        },
        rng,
    )?;
    for (i, v) in table.data_mut().iter_mut().enumerate() {
        if i / spec.embed_dim != PAD_ID {
            *v = rng.gen_range(-GRADCHECK_RANGE..GRADCHECK_RANGE);
        }
    }
    params.embedding.matrix = table;
    for t in &mut params.tensors {
        for v in t.value.data_mut() {
            *v = rng.gen_range(-GRADCHECK_RANGE..GRADCHECK_RANGE);
        }
    }
    Ok(params)
}

/// Pre-padded random sequences with mixed amounts of padding.
pub fn random_batch(spec: &ModelSpec, vocab: usize, rng: &mut impl Rng) -> (Vec<EncodedSequence>, Vec<f64>) {
    let mut seqs = Vec::with_capacity(TOY_BATCH);
    let mut targets = Vec::with_capacity(TOY_BATCH);
    for b in 0..TOY_BATCH {
        let pad = b.min(spec.max_len - 1);
        let ids = (0..spec.max_len)
            .map(|t| if t < pad { PAD_ID } else { rng.gen_range(1..vocab) })
            .collect();
        seqs.push(EncodedSequence(ids));
        targets.push((b % 2) as f64);
    }
    (seqs, targets)
}

/// Central-difference check over the embedding and every weight tensor
/// of one architecture.
pub fn toy_gradient_check(kind: ModelKind, seed: u64) -> Result<GradCheckReport> {
    let spec = toy_spec(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_point(&spec, TOY_VOCAB, &mut rng)?;
    let (seqs, targets) = random_batch(&spec, TOY_VOCAB, &mut rng);
    let refs: Vec<&EncodedSequence> = seqs.iter().collect();

    let mut flat = vec![base.embedding.matrix.clone()];
    flat.extend(base.tensors.iter().map(|t| t.value.clone()));
    let mut work = base.clone();
    let eval = |p: &[Tensor]| {
        work.embedding.matrix.data_mut().copy_from_slice(p[0].data());
        for (t, v) in work.tensors.iter_mut().zip(&p[1..]) {
            t.value.data_mut().copy_from_slice(v.data());
        }
        let (loss, grads) = loss_and_gradients(&spec, &work, &refs, &targets)?;
        let mut g = Vec::with_capacity(p.len());
        g.push(grads.embedding.expect("toy embedding is trainable"));
        g.extend(grads.tensors);
        Ok((loss, g))
    };
    gradient_check(eval, &flat, GRADCHECK_TOLERANCE)
}
