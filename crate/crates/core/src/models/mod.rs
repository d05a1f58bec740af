//! LSTM, BiLSTM, GRU, BiGRU and CNN classifiers over encoded sequences.
//!
//! Every model is `embedding → body → dense(1) → sigmoid`, with FR as the
//! positive class. Weight shapes (`d` embedding width, `H` hidden size,
//! `F` filters, `w` filter width):
//!
//! | tensor            | shape        | models            |
//! |-------------------|--------------|-------------------|
//! | `lstm_fw.w_x`     | `[d, 4H]`    | LSTM, BiLSTM      |
//! | `lstm_fw.w_h`     | `[H, 4H]`    | LSTM, BiLSTM      |
//! | `lstm_fw.b`       | `[1, 4H]`    | LSTM, BiLSTM      |
//! | `lstm_bw.*`       | as above     | BiLSTM            |
//! | `gru_fw.w_x`      | `[d, 3H]`    | GRU, BiGRU        |
//! | `gru_fw.w_h`      | `[H, 3H]`    | GRU, BiGRU        |
//! | `gru_fw.b`        | `[1, 3H]`    | GRU, BiGRU        |
//! | `gru_bw.*`        | as above     | BiGRU             |
//! | `conv.w`          | `[w·d, F]`   | CNN               |
//! | `conv.b`          | `[1, F]`     | CNN               |
//! | `dense.w`         | `[feat, 1]`  | all (feat = H, 2H or F) |
//! | `dense.b`         | `[1, 1]`     | all               |

mod checkpoint;
mod network;
mod params;
mod spec;
mod toy;

pub use checkpoint::Checkpoint;
pub use network::{
    build_forward, gru_step, loss_and_gradients, lstm_step, predict, predict_batch, run_sequence,
    ForwardPass, GruCell, LstmCell, ParamGrads,
};
pub use params::{glorot_limit, NamedTensor, ParameterSet, LSTM_FORGET_BIAS};
pub use toy::{
    random_batch, random_point, toy_gradient_check, toy_spec, GRADCHECK_RANGE, GRADCHECK_TOLERANCE,
    TOY_BATCH, TOY_VOCAB,
};
pub use spec::{
    CellKind, ModelKind, ModelSpec, DEFAULT_CONV_WIDTH, DEFAULT_EMBED_DIM, DEFAULT_FILTERS,
    DEFAULT_HIDDEN,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sigmoid, Tensor};
    use crate::vocab_embed::{EmbeddingMode, EncodedSequence, EmbeddingTable, init_corpus_trained_with};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_params(spec: &ModelSpec, seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = init_corpus_trained_with(20, spec.embed_dim, &mut rng).unwrap();
        ParameterSet::init(spec, emb, &mut rng).unwrap()
    }

    fn seq(ids: &[usize]) -> EncodedSequence {
        EncodedSequence(ids.to_vec())
    }

    #[test]
    fn zero_cell_is_fixed_point() {
        let (d, h) = (3, 4);
        let cell = LstmCell {
            w_x: Tensor::zeros(&[d, 4 * h]),
            w_h: Tensor::zeros(&[h, 4 * h]),
            b: Tensor::zeros(&[1, 4 * h]),
        };
        let (h_t, c_t) = lstm_step(&[0.3, -2.0, 1.0], &[0.0; 4], &[0.0; 4], &cell).unwrap();
        assert_eq!(h_t, vec![0.0; 4]);
        assert_eq!(c_t, vec![0.0; 4]);
    }

    #[test]
    fn saturated_forget_gate_retains_memory() {
        let (d, h) = (2, 3);
        let mut b = Tensor::zeros(&[1, 4 * h]);
        for j in 0..h {
            b.set(0, j, -20.0); // input gate closed
            b.set(0, h + j, 20.0); // forget gate open
        }
        let cell = LstmCell {
            w_x: Tensor::filled(&[d, 4 * h], 0.1),
            w_h: Tensor::filled(&[h, 4 * h], 0.1),
            b,
        };
        let c_prev = [0.7, -0.4, 0.2];
        let (h_t, c_t) = lstm_step(&[1.0, -1.0], &[0.1, 0.2, 0.3], &c_prev, &cell).unwrap();
        for j in 0..h {
            assert!((c_t[j] - c_prev[j]).abs() < 1e-7);
            assert!(h_t[j].abs() < 1.0);
        }
    }

    #[test]
    fn cell_shape_errors() {
        let cell = LstmCell {
            w_x: Tensor::zeros(&[3, 8]),
            w_h: Tensor::zeros(&[2, 8]),
            b: Tensor::zeros(&[1, 8]),
        };
        assert!(lstm_step(&[0.0; 2], &[0.0; 2], &[0.0; 2], &cell).is_err());
        let gcell = GruCell {
            w_x: Tensor::zeros(&[3, 6]),
            w_h: Tensor::zeros(&[2, 6]),
            b: Tensor::zeros(&[1, 6]),
        };
        assert!(gru_step(&[0.0; 3], &[0.0; 3], &gcell).is_err());
    }

    #[test]
    fn gru_gate_limits() {
        let (d, h) = (2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rand_t = |shape: &[usize]| {
            let mut t = Tensor::zeros(shape);
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            t
        };
        let w_x = rand_t(&[d, 3 * h]);
        let w_h = rand_t(&[h, 3 * h]);
        let x = [0.4, -0.9];
        let h_prev = [0.3, -0.2, 0.6];

        let mut b = Tensor::zeros(&[1, 3 * h]);
        (0..h).for_each(|j| b.set(0, j, -20.0));
        let closed = GruCell { w_x: w_x.clone(), w_h: w_h.clone(), b };
        let h_t = gru_step(&x, &h_prev, &closed).unwrap();
        for j in 0..h {
            assert!((h_t[j] - h_prev[j]).abs() < 1e-7);
        }

        let mut b = Tensor::zeros(&[1, 3 * h]);
        (0..h).for_each(|j| b.set(0, j, 20.0));
        let open = GruCell { w_x: w_x.clone(), w_h: w_h.clone(), b: b.clone() };
        let h_t = gru_step(&x, &h_prev, &open).unwrap();
        // candidate computed by hand with z ≈ 1
        for j in 0..h {
            let r_pre: f64 = (0..d).map(|k| x[k] * w_x.get(k, h + j)).sum::<f64>()
                + (0..h).map(|k| h_prev[k] * w_h.get(k, h + j)).sum::<f64>();
            let r: Vec<f64> = (0..h)
                .map(|k| {
                    let pre: f64 = (0..d).map(|q| x[q] * w_x.get(q, h + k)).sum::<f64>()
                        + (0..h).map(|q| h_prev[q] * w_h.get(q, h + k)).sum::<f64>();
                    sigmoid(pre)
                })
                .collect();
            let _ = r_pre;
            let n_pre: f64 = (0..d).map(|k| x[k] * w_x.get(k, 2 * h + j)).sum::<f64>()
                + (0..h).map(|k| r[k] * h_prev[k] * w_h.get(k, 2 * h + j)).sum::<f64>();
            assert!((h_t[j] - n_pre.tanh()).abs() < 1e-7);
        }
    }

    #[test]
    fn bidirectional_with_zero_backward_block() {
        for kind in [ModelKind::BiLstm, ModelKind::BiGru] {
            let spec = toy_spec(kind);
            let mut params = toy_params(&spec, 11);
            params.zero_direction(&spec, true);
            let s = seq(&[0, 0, 3, 7, 2, 19]);
            let feat = run_sequence(&s, &params, &spec).unwrap();
            assert_eq!(feat.len(), 10);
            assert!(feat[5..].iter().all(|&v| v == 0.0), "{kind}: {feat:?}");

            // first half equals the unidirectional model with the same forward block
            let uni_kind = if kind == ModelKind::BiLstm { ModelKind::Lstm } else { ModelKind::Gru };
            let uni_spec = toy_spec(uni_kind);
            let mut uni = params.clone();
            uni.tensors.drain(3..6);
            uni.tensors.last_mut().unwrap().value = params.tensors[7].value.clone();
            let n = uni.tensors.len();
            uni.tensors[n - 2].value = Tensor::zeros(&[5, 1]);
            let uni_feat = run_sequence(&s, &uni, &uni_spec).unwrap();
            assert_eq!(&feat[..5], &uni_feat[..]);
        }
    }

    #[test]
    fn cnn_constant_input_matches_single_window() {
        let spec = toy_spec(ModelKind::Cnn);
        let params = toy_params(&spec, 5);
        let feat = run_sequence(&seq(&[4; 6]), &params, &spec).unwrap();
        // one window of two copies of row 4
        let e = params.embedding.lookup(4);
        let w = params.get("conv.w").unwrap();
        let b = params.get("conv.b").unwrap();
        for f in 0..3 {
            let mut z = b.data()[f];
            for k in 0..2 {
                for j in 0..4 {
                    z += e[j] * w.get(k * 4 + j, f);
                }
            }
            assert!((feat[f] - z.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_weights_give_half() {
        for kind in ModelKind::ALL {
            let spec = toy_spec(kind);
            let mut params = toy_params(&spec, 2);
            params.get_mut("dense.w").unwrap().data_mut().fill(0.0);
            for ids in [[0, 0, 0, 0, 0, 1], [5, 6, 7, 8, 9, 10]] {
                assert_eq!(predict(&seq(&ids), &params, &spec).unwrap(), 0.5);
            }
        }
    }

    #[test]
    fn predictions_are_probabilities_and_deterministic() {
        for kind in ModelKind::ALL {
            let spec = toy_spec(kind);
            let params = toy_params(&spec, 8);
            let s = seq(&[0, 2, 4, 6, 8, 10]);
            let p = predict(&s, &params, &spec).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert_eq!(p, predict(&s, &params, &spec).unwrap());
            let batch = predict_batch(&[s.clone(), seq(&[1; 6])], &params, &spec).unwrap();
            assert_eq!(batch[0], p);
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let spec = toy_spec(ModelKind::Gru);
        let params = toy_params(&spec, 1);
        assert!(predict(&seq(&[1, 2, 3]), &params, &spec).is_err());
        assert!(predict(&seq(&[1, 2, 3, 4, 5, 99]), &params, &spec).is_err());
    }

    #[test]
    fn init_follows_conventions() {
        let spec = toy_spec(ModelKind::BiLstm);
        let params = toy_params(&spec, 4);
        params.check(&spec).unwrap();
        assert_eq!(params.parameter_count(), spec.parameter_count(20));
        let b = params.get("lstm_bw.b").unwrap().data();
        assert_eq!(&b[..5], &[0.0; 5]);
        assert_eq!(&b[5..10], &[1.0; 5]);
        let limit = glorot_limit(4, 20);
        assert!(params.get("lstm_fw.w_x").unwrap().data().iter().all(|v| v.abs() <= limit));
        assert_eq!(params.get("dense.b").unwrap().data(), &[0.0]);
    }

    #[test]
    fn end_to_end_gradients() {
        for kind in ModelKind::ALL {
            for seed in [1, 2] {
                let report = toy_gradient_check(kind, seed).unwrap();
                assert!(report.passed, "{kind}: {} at {:?}", report.max_relative_error, report.worst_entry);
                assert!(report.entries_checked > 100);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        use crate::textprep::TokenSequence;
        use crate::vocab_embed::Vocabulary;
        let spec = toy_spec(ModelKind::Cnn);
        let params = toy_params(&spec, 30);
        let mut tokens = vec!["x".to_string(); 18];
        for (i, t) in tokens.iter_mut().enumerate() {
            *t = format!("w{i:02}");
        }
        let vocab = Vocabulary::build(std::iter::once(&TokenSequence(tokens)));
        let ck = Checkpoint { spec, vocab, params };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn frozen_embedding_has_no_gradient() {
        let spec = toy_spec(ModelKind::Gru);
        let mut params = toy_params(&spec, 6);
        params.embedding = EmbeddingTable {
            trainable: false,
            mode: EmbeddingMode::PretrainedStatic,
            ..params.embedding
        };
        let s = seq(&[0, 1, 2, 3, 4, 5]);
        let (_, grads) = loss_and_gradients(&spec, &params, &[&s], &[1.0]).unwrap();
        assert!(grads.embedding.is_none());
    }
}
