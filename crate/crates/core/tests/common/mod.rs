//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::Rng;
use reqclass::corpus::Label;
use reqclass::models::{GruCell, LstmCell};
use reqclass::numerics::Tensor;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Column `col` of `x·W + b`, summed term by term.
fn affine(x: &[f64], w: &Tensor, b: &Tensor, col: usize) -> f64 {
    let mut s = b.get(0, col);
    for (k, xk) in x.iter().enumerate() {
        s += xk * w.get(k, col);
    }
    s
}

fn recur(h: &[f64], w: &Tensor, col: usize) -> f64 {
    h.iter().enumerate().map(|(k, hk)| hk * w.get(k, col)).sum()
}

/// Unit-by-unit LSTM step. Gate columns: input, forget, candidate, output.
pub fn ref_lstm_step(x: &[f64], h: &[f64], c: &[f64], cell: &LstmCell) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let mut h_out = vec![0.0; n];
    let mut c_out = vec![0.0; n];
    for j in 0..n {
        let pre = |gate: usize| affine(x, &cell.w_x, &cell.b, gate * n + j) + recur(h, &cell.w_h, gate * n + j);
        let input = sigmoid(pre(0));
        let forget = sigmoid(pre(1));
        let cand = pre(2).tanh();
        let output = sigmoid(pre(3));
        c_out[j] = forget * c[j] + input * cand;
        h_out[j] = output * c_out[j].tanh();
    }
    (h_out, c_out)
}

/// Candidate of a GRU step (reset applied to the previous state).
pub fn ref_gru_candidate(x: &[f64], h: &[f64], cell: &GruCell) -> Vec<f64> {
    let n = h.len();
    let reset: Vec<f64> = (0..n)
        .map(|j| sigmoid(affine(x, &cell.w_x, &cell.b, n + j) + recur(h, &cell.w_h, n + j)))
        .collect();
    let rh: Vec<f64> = reset.iter().zip(h).map(|(r, hv)| r * hv).collect();
    (0..n)
        .map(|j| (affine(x, &cell.w_x, &cell.b, 2 * n + j) + recur(&rh, &cell.w_h, 2 * n + j)).tanh())
        .collect()
}

/// Unit-by-unit GRU step. Gate columns: update, reset, candidate.
pub fn ref_gru_step(x: &[f64], h: &[f64], cell: &GruCell) -> Vec<f64> {
    let n = h.len();
    let cand = ref_gru_candidate(x, h, cell);
    (0..n)
        .map(|j| {
            let update = sigmoid(affine(x, &cell.w_x, &cell.b, j) + recur(h, &cell.w_h, j));
            (1.0 - update) * h[j] + update * cand[j]
        })
        .collect()
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_lstm<R: Rng>(rng: &mut R, d: usize, h: usize) -> LstmCell {
    LstmCell {
        w_x: random_tensor(rng, d, 4 * h, 1.0),
        w_h: random_tensor(rng, h, 4 * h, 1.0),
        b: random_tensor(rng, 1, 4 * h, 1.0),
    }
}

pub fn random_gru<R: Rng>(rng: &mut R, d: usize, h: usize) -> GruCell {
    GruCell {
        w_x: random_tensor(rng, d, 3 * h, 1.0),
        w_h: random_tensor(rng, h, 3 * h, 1.0),
        b: random_tensor(rng, 1, 3 * h, 1.0),
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Weighted precision, recall and F1 (percent) by direct counting over the
/// label lists, one class at a time.
pub fn brute_force_weighted(pred: &[Label], truth: &[Label]) -> [f64; 3] {
    let n = truth.len() as f64;
    let mut out = [0.0; 3];
    for class in [Label::Fr, Label::Nfr] {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        let mut actual = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            if *p == class {
                predicted += 1.0;
            }
            if *t == class {
                actual += 1.0;
            }
            if *p == class && *t == class {
                tp += 1.0;
            }
        }
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let weight = actual / n;
        out[0] += weight * precision * 100.0;
        out[1] += weight * recall * 100.0;
        out[2] += weight * f1 * 100.0;
    }
    out
}

const STOP: [&str; 8] = ["the", "shall", "be", "to", "of", "and", "a", "system"];

/// Requirement-like corpus with a large vocabulary and realistic lengths:
/// 8 to 45 words, about a third of them stopwords, content words drawn
/// with Zipf-like frequencies from a pool of pseudo-words. A few cue words
/// lean towards each class so models learn something, without making the
/// task separable.
pub fn realistic_corpus(n: usize, vocab: usize, seed: u64) -> Vec<reqclass::corpus::RequirementRecord> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let consonants = b"bcdfgklmnprstvz";
    let vowels = b"aeiou";
    let mut seen = std::collections::HashSet::new();
    let mut pool = Vec::with_capacity(vocab);
    while pool.len() < vocab {
        let syllables = rng.gen_range(2..5);
        let w: String = (0..syllables)
            .flat_map(|_| {
                [
                    *consonants.choose(&mut rng).unwrap() as char,
                    *vowels.choose(&mut rng).unwrap() as char,
                ]
            })
            .collect();
        if seen.insert(w.clone()) {
            pool.push(w);
        }
    }
    let weights: Vec<f64> = (1..=vocab).map(|r| 1.0 / r as f64).collect();
    let dist = rand::distributions::WeightedIndex::new(&weights).unwrap();
    (0..n)
        .map(|_| {
            let label = if rng.gen_bool(0.55) { Label::Fr } else { Label::Nfr };
            let cues: &[&str] = match label {
                Label::Fr => &["display", "record", "export", "print"],
                Label::Nfr => &["secure", "fast", "reliable", "available"],
            };
            let len = rng.gen_range(8..=45);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < 0.33 {
                        STOP.choose(&mut rng).unwrap().to_string()
                    } else if u < 0.38 {
                        cues.choose(&mut rng).unwrap().to_string()
                    } else {
                        pool[rng.sample(&dist)].clone()
                    }
                })
                .collect();
            reqclass::corpus::RequirementRecord::new(words.join(" ") + ".", label).unwrap()
        })
        .collect()
}

/// A whitespace-separated vector file covering `words`, values in ±0.5.
pub fn write_vector_file(path: &std::path::Path, words: &[String], dim: usize, seed: u64) {
    use rand::SeedableRng;
    use std::io::Write;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for w in words {
        write!(f, "{w}").unwrap();
        for _ in 0..dim {
            write!(f, " {:.5}", rng.gen_range(-0.5..0.5)).unwrap();
        }
        writeln!(f).unwrap();
    }
}
