use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{CellKind, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::vocab_embed::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Embedding table plus every weight tensor of one model, in the order
/// given by [`ModelSpec::shape_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub embedding: EmbeddingTable,
    pub tensors: Vec<NamedTensor>,
}

/// Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub const LSTM_FORGET_BIAS: f64 = 1.0;

impl ParameterSet {
    /// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
    pub fn init<R: Rng>(spec: &ModelSpec, embedding: EmbeddingTable, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        if embedding.dim() != spec.embed_dim {
            return Err(Error::shape(
                "ParameterSet::init",
                &[spec.embed_dim],
                &[embedding.dim()],
            ));
        }
        let mut tensors = Vec::new();
        for (name, shape) in spec.shape_table() {
            let mut value = Tensor::zeros(&shape);
            if name.ends_with(".w") || name.ends_with(".w_x") || name.ends_with(".w_h") {
                let (fan_in, fan_out) = if name == "conv.w" {
                    // receptive field counts toward both fans
                    (shape[0], spec.conv_width * shape[1])
                } else {
                    (shape[0], shape[1])
                };
                let limit = glorot_limit(fan_in, fan_out);
                for v in value.data_mut() {
                    *v = rng.gen_range(-limit..=limit);
                }
            } else if name.starts_with("lstm") && name.ends_with(".b") {
                let h = spec.hidden;
                for v in &mut value.data_mut()[h..2 * h] {
                    *v = LSTM_FORGET_BIAS;
                }
            }
            tensors.push(NamedTensor { name, value });
        }
        Ok(ParameterSet { embedding, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name).map(|t| &mut t.value)
    }

    /// Checks names and shapes against the spec.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let table = spec.shape_table();
        if table.len() != self.tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} tensors, found {}",
                spec.kind,
                table.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in table.iter().zip(&self.tensors) {
            if *name != t.name || t.value.shape() != shape {
                return Err(Error::InvalidArgument(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    t.name,
                    t.value.shape()
                )));
            }
        }
        if self.embedding.dim() != spec.embed_dim {
            return Err(Error::shape("embedding", &[spec.embed_dim], &[self.embedding.dim()]));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.embedding.matrix.len() + self.tensors.iter().map(|t| t.value.len()).sum::<usize>()
    }

    /// Index range of one direction's cell tensors.
    pub(crate) fn cell_block(&self, spec: &ModelSpec, backward: bool) -> Option<(CellKind, usize)> {
        let cell = spec.kind.cell()?;
        let start = if backward { 3 } else { 0 };
        if backward && !spec.kind.is_bidirectional() {
            return None;
        }
        Some((cell, start))
    }

    /// Zeroes one direction's cell block. Used by tests of the
    /// bidirectional concatenation.
    pub fn zero_direction(&mut self, spec: &ModelSpec, backward: bool) {
        if let Some((_, start)) = self.cell_block(spec, backward) {
            for t in &mut self.tensors[start..start + 3] {
                t.value.data_mut().fill(0.0);
            }
        }
    }
}
