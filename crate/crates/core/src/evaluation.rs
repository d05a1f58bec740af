//! Support-weighted precision, recall and F1, and mean(std) aggregation.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub fr: ClassCounts,
    pub nfr: ClassCounts,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn class(&self, label: Label) -> &ClassCounts {
        match label {
            Label::Fr => &self.fr,
            Label::Nfr => &self.nfr,
        }
    }

    fn class_mut(&mut self, label: Label) -> &mut ClassCounts {
        match label {
            Label::Fr => &mut self.fr,
            Label::Nfr => &mut self.nfr,
        }
    }

    /// Builds counts from a 2×2 table `[truth][prediction]`, FR first.
    pub fn from_table(table: [[usize; 2]; 2]) -> Self {
        let [[fr_fr, fr_nfr], [nfr_fr, nfr_nfr]] = table;
        ConfusionCounts {
            fr: ClassCounts { tp: fr_fr, fp: nfr_fr, r#fn: fr_nfr, support: fr_fr + fr_nfr },
            nfr: ClassCounts { tp: nfr_nfr, fp: fr_nfr, r#fn: nfr_fr, support: nfr_fr + nfr_nfr },
            total: fr_fr + fr_nfr + nfr_fr + nfr_nfr,
        }
    }

    /// Fraction of correct predictions.
    pub fn accuracy(&self) -> f64 {
        (self.fr.tp + self.nfr.tp) as f64 / self.total as f64
    }
}

pub fn confusion(predictions: &[Label], truths: &[Label]) -> Result<ConfusionCounts> {
    if predictions.len() != truths.len() {
        return Err(Error::shape("confusion", &[predictions.len()], &[truths.len()]));
    }
    if predictions.is_empty() {
        return Err(Error::EmptySequence("confusion"));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        c.total += 1;
        c.class_mut(t).support += 1;
        if p == t {
            c.class_mut(t).tp += 1;
        } else {
            c.class_mut(p).fp += 1;
            c.class_mut(t).r#fn += 1;
        }
    }
    Ok(c)
}

/// Percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 3] = ["Precision", "Recall", "F-score"];

    pub fn values(&self) -> [f64; 3] {
        [self.precision, self.recall, self.f1]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 as fractions.
pub fn class_metrics(c: &ClassCounts) -> (f64, f64, f64) {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.r#fn);
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn weighted_metrics(counts: &ConfusionCounts) -> Result<MetricsReport> {
    if counts.total == 0 {
        return Err(Error::EmptySequence("weighted_metrics"));
    }
    let n = counts.total as f64;
    let mut out = [0.0; 3];
    for label in Label::ALL {
        let c = counts.class(label);
        let w = c.support as f64 / n;
        let (p, r, f) = class_metrics(c);
        out[0] += w * p;
        out[1] += w * r;
        out[2] += w * f;
    }
    Ok(MetricsReport {
        precision: 100.0 * out[0],
        recall: 100.0 * out[1],
        f1: 100.0 * out[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub mean: f64,
    /// Sample standard deviation (divisor `n − 1`).
    pub std: f64,
    pub count: usize,
}

pub fn aggregate(values: &[f64]) -> Result<AggregateCell> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "aggregate needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(AggregateCell {
        mean,
        std: (ss / (n - 1.0)).sqrt(),
        count: values.len(),
    })
}

/// Rounds half to even at two decimals, using the shortest decimal
/// representation of `x` so that e.g. `1.335` rounds to `1.34`.
pub fn round2(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let neg = x.is_sign_negative() && x != 0.0;
    let text = format!("{}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    digits.extend(frac.iter().take(2));
    digits.resize(int_len + 2, 0);
    let rest = frac.get(2..).unwrap_or(&[]);

    let round_up = match rest.first() {
        None => false,
        Some(&d) if d > 5 => true,
        Some(&d) if d < 5 => false,
        Some(_) => rest[1..].iter().any(|&d| d != 0) || digits.last().is_some_and(|d| d % 2 == 1),
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 2;
    let int: String = digits[..split].iter().map(|d| char::from(b'0' + d)).collect();
    let frac: String = digits[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let sign = if neg && digits.iter().any(|&d| d != 0) { "-" } else { "" };
    format!("{sign}{int}.{frac}")
}

/// `MM.MM(S.SS)`.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{}({})", round2(mean), round2(std))
}

impl AggregateCell {
    pub fn render(&self) -> String {
        format_cell(self.mean, self.std)
    }
}
