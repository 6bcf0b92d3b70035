use std::collections::VecDeque;

use super::model::ModelParams;
use crate::error::{Error, Result};

/// CoV assigned when a community's weighted mean accuracy is zero.
pub const DEGENERATE_COV: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityState {
    pub id: usize,
    /// Global device ids, in the same order as `history`.
    pub members: Vec<usize>,
    pub model: ModelParams,
    pub psi: f64,
    /// Most recent reported accuracies per member, oldest first.
    pub history: Vec<VecDeque<f64>>,
    pub window: usize,
}

impl CommunityState {
    pub fn new(id: usize, members: Vec<usize>, model: ModelParams, window: usize, num_classes: usize) -> Self {
        let chance = 1.0 / num_classes.max(1) as f64;
        let history = members.iter().map(|_| VecDeque::from([chance])).collect();
        Self {
            id,
            members,
            model,
            psi: 1.0,
            history,
            window: window.max(1),
        }
    }

    /// Appends an accuracy for member slot `i`, keeping the last `window`.
    pub fn record(&mut self, i: usize, accuracy: f64) {
        let h = &mut self.history[i];
        h.push_back(accuracy);
        while h.len() > self.window {
            h.pop_front();
        }
    }

    /// Window-mean accuracy per member.
    pub fn window_means(&self) -> Vec<f64> {
        self.history
            .iter()
            .map(|h| h.iter().sum::<f64>() / h.len().max(1) as f64)
            .collect()
    }

    /// Latest stored accuracy per member.
    pub fn latest(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.back().copied().unwrap_or(0.0)).collect()
    }
}

/// sqrt(sum_k (e_k - e_bar)^2) / e_bar with e_bar = sum_k p_k e_k.
pub fn cov_from_accuracies(acc: &[f64], weights: &[f64]) -> Result<f64> {
    if acc.len() != weights.len() || acc.is_empty() {
        return Err(Error::Shape(format!(
            "{} accuracies for {} weights",
            acc.len(),
            weights.len()
        )));
    }
    let mean: f64 = acc.iter().zip(weights).map(|(e, p)| e * p).sum();
    if mean <= 0.0 {
        return Ok(DEGENERATE_COV);
    }
    let ss: f64 = acc.iter().map(|e| (e - mean).powi(2)).sum();
    Ok(ss.sqrt() / mean)
}

/// Recomputes psi from the stored windows. `weights` are the members' p_k
/// in `members` order.
pub fn update_cov(community: &CommunityState, weights: &[f64]) -> Result<f64> {
    cov_from_accuracies(&community.window_means(), weights)
}

pub fn importance(weight: f64, psi: f64, lambda: f64, participated_last_round: bool) -> f64 {
    if participated_last_round {
        weight * psi
    } else {
        weight * psi * lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::ModelShape;
    use proptest::prelude::*;

    fn state(n: usize, window: usize) -> CommunityState {
        let model = ModelParams::zeros(ModelShape { inputs: 1, hidden: 0, classes: 2 });
        CommunityState::new(0, (0..n).collect(), model, window, 10)
    }

    #[test]
    fn two_device_example() {
        let psi = cov_from_accuracies(&[0.5, 1.0], &[0.5, 0.5]).unwrap();
        let oracle = (0.0625f64 + 0.0625).sqrt() / 0.75;
        assert!((psi - oracle).abs() < 1e-15);
        assert!((psi - 0.4714).abs() < 1e-4);
    }

    #[test]
    fn homogeneous_is_zero() {
        assert_eq!(cov_from_accuracies(&[0.7; 4], &[0.25; 4]).unwrap(), 0.0);
    }

    #[test]
    fn zero_mean_uses_sentinel() {
        assert_eq!(cov_from_accuracies(&[0.0, 0.0], &[0.5, 0.5]).unwrap(), DEGENERATE_COV);
    }

    #[test]
    fn starts_at_one_with_chance_history() {
        let s = state(3, 4);
        assert_eq!(s.psi, 1.0);
        assert_eq!(s.latest(), vec![0.1; 3]);
    }

    #[test]
    fn window_of_one_keeps_latest() {
        let mut s = state(2, 1);
        s.record(0, 0.3);
        s.record(0, 0.8);
        s.record(1, 0.45);
        assert_eq!(s.window_means(), vec![0.8, 0.45]);
    }

    #[test]
    fn window_mean_over_last_entries() {
        let mut s = state(1, 3);
        for a in [0.2, 0.4, 0.6, 0.8] {
            s.record(0, a);
        }
        assert!((s.window_means()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn importance_examples() {
        assert!((importance(0.2, 1.5, 1.5, false) - 0.45).abs() < 1e-15);
        assert!((importance(0.2, 1.5, 1.5, true) - 0.30).abs() < 1e-15);
        assert_eq!(importance(0.2, 0.0, 7.0, false), 0.0);
    }

    proptest! {
        #[test]
        fn cov_scale_invariant(acc in proptest::collection::vec(0.01f64..1.0, 2..8), t in 0.01f64..100.0) {
            let w = vec![1.0 / acc.len() as f64; acc.len()];
            let scaled: Vec<f64> = acc.iter().map(|a| a * t).collect();
            let a = cov_from_accuracies(&acc, &w).unwrap();
            let b = cov_from_accuracies(&scaled, &w).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn cov_nonnegative(acc in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let w = vec![1.0 / acc.len() as f64; acc.len()];
            prop_assert!(cov_from_accuracies(&acc, &w).unwrap() >= 0.0);
        }
    }
}
