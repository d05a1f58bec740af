//! Hard (majority) and soft (mean probability) voting over model outputs.

use crate::corpus::Label;
use crate::error::{Error, Result};

pub const VOTE_THRESHOLD: f64 = 0.5;

/// FR probabilities of one example from each member, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct VotePanel(Vec<f64>);

impl VotePanel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptySequence("VotePanel"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("vote probability {p} outside [0, 1]")));
        }
        Ok(VotePanel(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Summed in sorted order so the result does not depend on member order.
    pub fn mean(&self) -> f64 {
        let mut sorted = self.0.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.iter().sum::<f64>() / sorted.len() as f64
    }
}

/// Number of members voting FR.
pub fn fr_votes(panel: &VotePanel, threshold: f64) -> usize {
    panel.0.iter().filter(|&&p| p >= threshold).count()
}

/// Majority of thresholded member labels; an even split falls back to
/// [`soft_vote`].
pub fn hard_vote(panel: &VotePanel, threshold: f64) -> Label {
    let fr = fr_votes(panel, threshold);
    let nfr = panel.len() - fr;
    match fr.cmp(&nfr) {
        std::cmp::Ordering::Greater => Label::Fr,
        std::cmp::Ordering::Less => Label::Nfr,
        std::cmp::Ordering::Equal => soft_vote(panel, threshold),
    }
}

pub fn soft_vote(panel: &VotePanel, threshold: f64) -> Label {
    if panel.mean() >= threshold {
        Label::Fr
    } else {
        Label::Nfr
    }
}

/// Per-example (hard, soft) labels from per-model probability columns.
pub fn vote_columns(columns: &[Vec<f64>]) -> Result<(Vec<Label>, Vec<Label>)> {
    let n = columns.first().map_or(0, Vec::len);
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::shape("vote_columns", &[n], &[c.len()]));
    }
    let mut hard = Vec::with_capacity(n);
    let mut soft = Vec::with_capacity(n);
    for i in 0..n {
        let panel = VotePanel::new(columns.iter().map(|c| c[i]).collect())?;
        hard.push(hard_vote(&panel, VOTE_THRESHOLD));
        soft.push(soft_vote(&panel, VOTE_THRESHOLD));
    }
    Ok((hard, soft))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn panel(p: &[f64]) -> VotePanel {
        VotePanel::new(p.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        let p = panel(&[0.9, 0.8, 0.2, 0.6, 0.4]);
        assert_eq!(hard_vote(&p, 0.5), Label::Fr);
        assert_eq!(soft_vote(&p, 0.5), Label::Fr);
        assert!((p.mean() - 0.58).abs() < 1e-12);
        assert_eq!(hard_vote(&panel(&[0.1; 5]), 0.5), Label::Nfr);
        assert_eq!(soft_vote(&panel(&[0.5; 5]), 0.5), Label::Fr);
        assert_eq!(hard_vote(&panel(&[0.9, 0.6, 0.3, 0.4]), 0.5), Label::Fr);
        assert_eq!(hard_vote(&panel(&[0.6, 0.55, 0.1, 0.2]), 0.5), Label::Nfr);
        for p in [0.2, 0.5, 0.7] {
            let single = panel(&[p]);
            assert_eq!(hard_vote(&single, 0.5), Label::from_probability(p));
            assert_eq!(soft_vote(&single, 0.5), Label::from_probability(p));
        }
        assert!(VotePanel::new(vec![]).is_err());
        assert!(VotePanel::new(vec![1.2]).is_err());
    }

    #[test]
    fn exhaustive_five_member_majority() {
        for mask in 0u32..32 {
            // probabilities far from the threshold in both directions
            let probs: Vec<f64> = (0..5).map(|i| if mask >> i & 1 == 1 { 0.7 } else { 0.3 }).collect();
            let expected = if mask.count_ones() >= 3 { Label::Fr } else { Label::Nfr };
            let p = panel(&probs);
            assert_ne!(fr_votes(&p, 0.5) * 2, 5);
            assert_eq!(hard_vote(&p, 0.5), expected, "mask {mask:05b}");
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(v in prop::collection::vec(0.0f64..=1.0, 1..7), k in 0usize..7) {
            let mut w = v.clone();
            let len = w.len();
            w.rotate_left(k % len);
            w.reverse();
            prop_assert_eq!(hard_vote(&panel(&v), 0.5), hard_vote(&panel(&w), 0.5));
            prop_assert_eq!(soft_vote(&panel(&v), 0.5), soft_vote(&panel(&w), 0.5));
        }

        #[test]
        fn soft_vote_monotone(v in prop::collection::vec(0.0f64..=1.0, 5), i in 0usize..5, bump in 0.0f64..1.0) {
            let mut w = v.clone();
            w[i] = (w[i] + bump).min(1.0);
            if soft_vote(&panel(&v), 0.5) == Label::Fr {
                prop_assert_eq!(soft_vote(&panel(&w), 0.5), Label::Fr);
            }
        }
    }
}
