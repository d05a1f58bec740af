//! Forward passes of the five architectures on the gradient tape.
//!
//! Recurrent models project every timestep's embedding in one product
//! (`[T·B, d] · W_x + b`, rows ordered time-major) and then run the cell
//! over row slices of that projection. Gate blocks are laid out
//! `[i | f | g | o]` for the LSTM and `[z | r | candidate]` for the GRU.

use super::params::ParameterSet;
use super::spec::{CellKind, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::vocab_embed::{EncodedSequence, PAD_ID};

/// One LSTM cell's weights: `w_x [d, 4H]`, `w_h [H, 4H]`, `b [1, 4H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

/// One GRU cell's weights: `w_x [d, 3H]`, `w_h [H, 3H]`, `b [1, 3H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

/// `i, f, o = σ(·)`, `g = tanh(·)`, `c = f∘c_prev + i∘g`, `h = o∘tanh(c)`.
/// `x_proj` already holds `x·W_x + b`.
pub(crate) fn lstm_cell(
    g: &mut Graph,
    x_proj: NodeId,
    h: NodeId,
    c: NodeId,
    w_h: NodeId,
    hidden: usize,
) -> Result<(NodeId, NodeId)> {
    let rec = g.matmul(h, w_h)?;
    let z = g.add(x_proj, rec)?;
    let zi = g.slice_cols(z, 0, hidden)?;
    let zf = g.slice_cols(z, hidden, 2 * hidden)?;
    let zg = g.slice_cols(z, 2 * hidden, 3 * hidden)?;
    let zo = g.slice_cols(z, 3 * hidden, 4 * hidden)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// `z, r = σ(·)`, `n = tanh(x·W_n + (r∘h)·U_n + b_n)`, `h = (1−z)∘h + z∘n`.
pub(crate) fn gru_cell(
    g: &mut Graph,
    x_proj: NodeId,
    h: NodeId,
    w_h_gates: NodeId,
    w_h_cand: NodeId,
    hidden: usize,
) -> Result<NodeId> {
    let x_gates = g.slice_cols(x_proj, 0, 2 * hidden)?;
    let x_cand = g.slice_cols(x_proj, 2 * hidden, 3 * hidden)?;
    let rec = g.matmul(h, w_h_gates)?;
    let zr = g.add(x_gates, rec)?;
    let zz = g.slice_cols(zr, 0, hidden)?;
    let zr_ = g.slice_cols(zr, hidden, 2 * hidden)?;
    let z = g.sigmoid(zz);
    let r = g.sigmoid(zr_);
    let rh = g.mul(r, h)?;
    let rec_c = g.matmul(rh, w_h_cand)?;
    let pre = g.add(x_cand, rec_c)?;
    let cand = g.tanh(pre);
    let keep_w = g.one_minus(z);
    let keep = g.mul(keep_w, h)?;
    let write = g.mul(z, cand)?;
    g.add(keep, write)
}

fn check_cell(op: &'static str, gates: usize, x: &[f64], h: &[f64], w_x: &Tensor, w_h: &Tensor, b: &Tensor) -> Result<usize> {
    let hidden = h.len();
    if w_x.shape() != [x.len(), gates * hidden] {
        return Err(Error::shape(op, w_x.shape(), &[x.len(), gates * hidden]));
    }
    if w_h.shape() != [hidden, gates * hidden] {
        return Err(Error::shape(op, w_h.shape(), &[hidden, gates * hidden]));
    }
    if b.shape() != [1, gates * hidden] {
        return Err(Error::shape(op, b.shape(), &[1, gates * hidden]));
    }
    Ok(hidden)
}

/// A single LSTM step on plain vectors. Returns `(h_t, c_t)`.
pub fn lstm_step(x_t: &[f64], h_prev: &[f64], c_prev: &[f64], cell: &LstmCell) -> Result<(Vec<f64>, Vec<f64>)> {
    let hidden = check_cell("lstm_step", 4, x_t, h_prev, &cell.w_x, &cell.w_h, &cell.b)?;
    if c_prev.len() != hidden {
        return Err(Error::shape("lstm_step", &[hidden], &[c_prev.len()]));
    }
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(x_t.to_vec()));
    let h = g.constant(Tensor::row(h_prev.to_vec()));
    let c = g.constant(Tensor::row(c_prev.to_vec()));
    let w_x = g.constant(cell.w_x.clone());
    let w_h = g.constant(cell.w_h.clone());
    let b = g.constant(cell.b.clone());
    let xw = g.matmul(x, w_x)?;
    let proj = g.add_row_bias(xw, b)?;
    let (h_t, c_t) = lstm_cell(&mut g, proj, h, c, w_h, hidden)?;
    Ok((g.value(h_t).data().to_vec(), g.value(c_t).data().to_vec()))
}

/// A single GRU step on plain vectors.
pub fn gru_step(x_t: &[f64], h_prev: &[f64], cell: &GruCell) -> Result<Vec<f64>> {
    let hidden = check_cell("gru_step", 3, x_t, h_prev, &cell.w_x, &cell.w_h, &cell.b)?;
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(x_t.to_vec()));
    let h = g.constant(Tensor::row(h_prev.to_vec()));
    let w_x = g.constant(cell.w_x.clone());
    let w_h = g.constant(cell.w_h.clone());
    let b = g.constant(cell.b.clone());
    let xw = g.matmul(x, w_x)?;
    let proj = g.add_row_bias(xw, b)?;
    let wg = g.slice_cols(w_h, 0, 2 * hidden)?;
    let wc = g.slice_cols(w_h, 2 * hidden, 3 * hidden)?;
    let h_t = gru_cell(&mut g, proj, h, wg, wc, hidden)?;
    Ok(g.value(h_t).data().to_vec())
}

/// A built forward pass over one batch.
pub struct ForwardPass {
    pub graph: Graph,
    /// `[B, 1]` FR probabilities.
    pub probs: NodeId,
    /// `[B, feature_width]` head input.
    pub features: NodeId,
    pub embedding: NodeId,
    pub tensors: Vec<NodeId>,
}

/// Builds the forward graph. With `track_grads` the trainable embedding
/// and every weight tensor become gradient-receiving leaves.
pub fn build_forward(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &[&EncodedSequence],
    track_grads: bool,
) -> Result<ForwardPass> {
    if batch.is_empty() {
        return Err(Error::EmptySequence("build_forward"));
    }
    if let Some(bad) = batch.iter().find(|s| s.len() != spec.max_len) {
        return Err(Error::shape("build_forward", &[spec.max_len], &[bad.len()]));
    }
    let mut g = Graph::new();
    let embedding = if track_grads && params.embedding.trainable {
        g.param(params.embedding.matrix.clone())
    } else {
        g.constant(params.embedding.matrix.clone())
    };
    let tensors: Vec<NodeId> = params
        .tensors
        .iter()
        .map(|t| {
            if track_grads {
                g.param(t.value.clone())
            } else {
                g.constant(t.value.clone())
            }
        })
        .collect();

    let features = match spec.kind.cell() {
        Some(cell) => recurrent_features(&mut g, spec, cell, embedding, &tensors, batch)?,
        None => conv_features(&mut g, spec, embedding, &tensors, batch)?,
    };
    let n = tensors.len();
    let logits = g.matmul(features, tensors[n - 2])?;
    let logits = g.add_row_bias(logits, tensors[n - 1])?;
    let probs = g.sigmoid(logits);
    Ok(ForwardPass {
        graph: g,
        probs,
        features,
        embedding,
        tensors,
    })
}

fn recurrent_features(
    g: &mut Graph,
    spec: &ModelSpec,
    cell: CellKind,
    embedding: NodeId,
    tensors: &[NodeId],
    batch: &[&EncodedSequence],
) -> Result<NodeId> {
    let steps = spec.max_len;
    let mut ids = Vec::with_capacity(batch.len() * steps);
    for t in 0..steps {
        ids.extend(batch.iter().map(|s| s.ids()[t]));
    }
    let x_all = g.gather(embedding, &ids, Some(PAD_ID))?;
    let fw = run_direction(g, cell, x_all, &tensors[0..3], batch.len(), steps, false)?;
    if spec.kind.is_bidirectional() {
        let bw = run_direction(g, cell, x_all, &tensors[3..6], batch.len(), steps, true)?;
        g.concat_cols(&[fw, bw])
    } else {
        Ok(fw)
    }
}

fn run_direction(
    g: &mut Graph,
    cell: CellKind,
    x_all: NodeId,
    w: &[NodeId],
    batch: usize,
    steps: usize,
    reverse: bool,
) -> Result<NodeId> {
    let hidden = g.value(w[1]).rows();
    let xw = g.matmul(x_all, w[0])?;
    let proj = g.add_row_bias(xw, w[2])?;
    let zeros = Tensor::zeros(&[batch, hidden]);
    let mut h = g.constant(zeros.clone());
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    match cell {
        CellKind::Lstm => {
            let mut c = g.constant(zeros);
            for t in order {
                let x_t = g.slice_rows(proj, t * batch, (t + 1) * batch)?;
                (h, c) = lstm_cell(g, x_t, h, c, w[1], hidden)?;
            }
        }
        CellKind::Gru => {
            let wg = g.slice_cols(w[1], 0, 2 * hidden)?;
            let wc = g.slice_cols(w[1], 2 * hidden, 3 * hidden)?;
            for t in order {
                let x_t = g.slice_rows(proj, t * batch, (t + 1) * batch)?;
                h = gru_cell(g, x_t, h, wg, wc, hidden)?;
            }
        }
    }
    Ok(h)
}

fn conv_features(
    g: &mut Graph,
    spec: &ModelSpec,
    embedding: NodeId,
    tensors: &[NodeId],
    batch: &[&EncodedSequence],
) -> Result<NodeId> {
    let ids: Vec<usize> = batch.iter().flat_map(|s| s.ids().iter().copied()).collect();
    let windows = g.gather_windows(embedding, &ids, spec.max_len, spec.conv_width, Some(PAD_ID))?;
    let conv = g.matmul(windows, tensors[0])?;
    let conv = g.add_row_bias(conv, tensors[1])?;
    let act = g.relu(conv);
    g.max_over_time(act, spec.max_len - spec.conv_width + 1)
}

/// Feature vector of one sequence (the head's input).
pub fn run_sequence(ids: &EncodedSequence, params: &ParameterSet, spec: &ModelSpec) -> Result<Vec<f64>> {
    let pass = build_forward(spec, params, &[ids], false)?;
    Ok(pass.graph.value(pass.features).data().to_vec())
}

/// FR probability of one sequence.
pub fn predict(ids: &EncodedSequence, params: &ParameterSet, spec: &ModelSpec) -> Result<f64> {
    let pass = build_forward(spec, params, &[ids], false)?;
    Ok(pass.graph.value(pass.probs).data()[0])
}

const INFERENCE_BATCH: usize = 256;

pub fn predict_batch(seqs: &[EncodedSequence], params: &ParameterSet, spec: &ModelSpec) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(INFERENCE_BATCH) {
        let refs: Vec<&EncodedSequence> = chunk.iter().collect();
        let pass = build_forward(spec, params, &refs, false)?;
        out.extend_from_slice(pass.graph.value(pass.probs).data());
    }
    Ok(out)
}

/// Gradients for every entry of a [`ParameterSet`]. `embedding` is `None`
/// for frozen tables.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub embedding: Option<Tensor>,
    pub tensors: Vec<Tensor>,
}

/// Mean BCE over a batch and its gradients.
pub fn loss_and_gradients(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &[&EncodedSequence],
    targets: &[f64],
) -> Result<(f64, ParamGrads)> {
    let mut pass = build_forward(spec, params, batch, true)?;
    let loss = pass.graph.bce_mean(pass.probs, targets)?;
    let mut grads = pass.graph.backward(loss)?;
    let value = pass.graph.value(loss).data()[0];
    let embedding = if params.embedding.trainable {
        Some(
            grads
                .take(pass.embedding)
                .unwrap_or_else(|| Tensor::zeros(params.embedding.matrix.shape())),
        )
    } else {
        None
    };
    let tensors = pass
        .tensors
        .iter()
        .zip(&params.tensors)
        .map(|(&id, t)| grads.take(id).unwrap_or_else(|| Tensor::zeros(t.value.shape())))
        .collect();
    Ok((value, ParamGrads { embedding, tensors }))
}
