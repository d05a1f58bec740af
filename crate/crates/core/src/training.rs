//! Mini-batch training with Adam and a held-out validation slice.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::models::{loss_and_gradients, predict_batch, ModelSpec, ParameterSet};
use crate::numerics::{adam_step, bce_mean, AdamConfig, AdamState, Tensor};
use crate::vocab_embed::EncodedSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_split: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 64,
            epochs: 3,
            validation_split: 0.2,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch losses.
    pub train_loss: f64,
    /// `None` when the validation slice is empty.
    pub validation_loss: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}

/// Size of the validation slice: what remains after `floor(n·(1−split))`
/// training rows.
pub fn validation_count(n: usize, split: f64) -> usize {
    n - (n as f64 * (1.0 - split)).floor() as usize
}

/// Seeded shuffle of `0..n`, divided into (fit, validation) index lists.
/// Validation is the tail of the shuffle. The generator is left positioned
/// for the per-epoch batch shuffles.
pub fn partition(n: usize, split: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let val = order.split_off(n - validation_count(n, split));
    (order, val)
}

/// Fit `params` on `data`. Returns the final-epoch parameters.
pub fn train(
    spec: &ModelSpec,
    params: ParameterSet,
    data: &[EncodedSequence],
    labels: &[Label],
    config: &TrainingConfig,
) -> Result<(ParameterSet, TrainingTrace)> {
    if data.len() != labels.len() {
        return Err(Error::shape("train", &[data.len()], &[labels.len()]));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&config.validation_split) {
        return Err(Error::InvalidArgument(format!(
            "validation_split must lie in [0, 1), got {}",
            config.validation_split
        )));
    }
    params.check(spec)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut fit, val) = partition(data.len(), config.validation_split, &mut rng);
    for label in Label::ALL {
        if !fit.iter().any(|&i| labels[i] == label) {
            return Err(Error::DegenerateClass(format!("{label} (training portion)")));
        }
    }
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let val_seqs: Vec<EncodedSequence> = val.iter().map(|&i| data[i].clone()).collect();
    let val_targets: Vec<f64> = val.iter().map(|&i| targets[i]).collect();

    let mut params = params;
    let trainable = params.embedding.trainable;
    let mut state = {
        let emb = trainable.then_some(&params.embedding.matrix);
        AdamState::new(config.adam, emb.into_iter().chain(params.tensors.iter().map(|t| &t.value)))
    };
    let mut trace = TrainingTrace::default();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        fit.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in fit.chunks(config.batch_size).enumerate() {
            let batch: Vec<&EncodedSequence> = chunk.iter().map(|&i| &data[i]).collect();
            let batch_targets: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grads) = loss_and_gradients(spec, &params, &batch, &batch_targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            let mut grad_refs: Vec<&Tensor> = Vec::with_capacity(params.tensors.len() + 1);
            grad_refs.extend(grads.embedding.as_ref());
            grad_refs.extend(grads.tensors.iter());
            let mut param_refs: Vec<&mut Tensor> = Vec::with_capacity(grad_refs.len());
            if trainable {
                param_refs.push(&mut params.embedding.matrix);
            }
            param_refs.extend(params.tensors.iter_mut().map(|t| &mut t.value));
            adam_step(&mut param_refs, &grad_refs, &mut state)?;
            if param_refs.iter().any(|t| !t.all_finite()) {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            loss_sum += loss;
            batches += 1;
        }
        let validation_loss = if val_seqs.is_empty() {
            None
        } else {
            let probs = predict_batch(&val_seqs, &params, spec)?;
            Some(bce_mean(&probs, &val_targets))
        };
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            validation_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, trace))
}

/// Fraction of `data` whose thresholded prediction matches its label.
pub fn accuracy(spec: &ModelSpec, params: &ParameterSet, data: &[EncodedSequence], labels: &[Label]) -> Result<f64> {
    let probs = predict_batch(data, params, spec)?;
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| Label::from_probability(p) == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}
