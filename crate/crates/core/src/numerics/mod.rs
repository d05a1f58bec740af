//! Dense tensors, reverse-mode gradients, binary cross-entropy and Adam.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport, FD_STEP};
pub use graph::{bce_grad, bce_loss, sigmoid, Activation, Elementwise, Gradients, Graph, NodeId, BCE_CLIP};
pub use tensor::Tensor;

use crate::error::Result;

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(a.clone()), g.constant(b.clone()));
    let c = g.matmul(a, b)?;
    Ok(g.value(c).clone())
}

pub fn elementwise(op: Elementwise, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(a.clone()), g.constant(b.clone()));
    let c = g.elementwise(op, a, b)?;
    Ok(g.value(c).clone())
}

pub fn activation(op: Activation, a: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let a = g.constant(a.clone());
    let c = g.activation(op, a);
    g.value(c).clone()
}

/// Column-wise maximum of a `[T, d]` tensor, returned as `[1, d]`.
pub fn max_over_time(x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let steps = x.rows();
    let xs = g.constant(x.clone());
    let m = g.max_over_time(xs, if x.is_empty() { 0 } else { steps })?;
    Ok(g.value(m).clone())
}

/// Mean BCE over a batch of probabilities.
pub fn bce_mean(probs: &[f64], targets: &[f64]) -> f64 {
    probs.iter().zip(targets).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / probs.len() as f64
}
