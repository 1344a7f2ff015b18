//! Node churn: Bernoulli dropout with exponentially distributed absences.
//!
//! A node that starts a round accessible drops out with probability
//! `dropout_p`. Its absence lasts `ceil(d)` rounds with `d ~ Exp(lambda)`,
//! so every dropout costs at least one round. A node that rejoins in round
//! `t` cannot drop again in the same round.
//!
//! The churn machine only knows about churn. The engine narrows the
//! accessible set further with the connectivity graph through
//! [`AccessibilityState::settle`]; [`step_accessibility`] is the churn-only
//! transition.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChurnConfig {
    pub dropout_p: f64,
    pub lambda: f64,
}

impl Default for ChurnConfig {
    fn default() -> Self {
        Self {
            dropout_p: 0.1,
            lambda: 1.0,
        }
    }
}

impl ChurnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(invalid(
                "churn.dropout_p",
                format!("must lie in [0, 1] (got {})", self.dropout_p),
            ));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid(
                "churn.lambda",
                format!("must be finite and > 0 (got {})", self.lambda),
            ));
        }
        Ok(())
    }
}

/// Continuous inaccessible duration, `Exp(lambda)`.
pub fn sample_duration<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    Exp::new(lambda)
        .expect("lambda validated positive")
        .sample(rng)
}

/// Whole rounds of absence for one dropout event.
pub fn discretize_duration(d: f64) -> usize {
    (d.ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilityState {
    accessible: Vec<bool>,
    /// Churned nodes and the round at which they become accessible again.
    rejoin_at: BTreeMap<usize, usize>,
    /// `None` means the node has not been accessible in any round yet.
    last_accessible: Vec<Option<usize>>,
    /// Last settled round, `None` before round 0.
    round: Option<usize>,
}

impl AccessibilityState {
    /// Every node accessible, no round settled yet.
    pub fn new(n: usize) -> Self {
        Self {
            accessible: vec![true; n],
            rejoin_at: BTreeMap::new(),
            last_accessible: vec![None; n],
            round: None,
        }
    }

    pub fn len(&self) -> usize {
        self.accessible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accessible.is_empty()
    }

    pub fn accessible(&self) -> &[bool] {
        &self.accessible
    }

    pub fn is_accessible(&self, i: usize) -> bool {
        self.accessible[i]
    }

    /// True when `i` is absent because of churn (as opposed to isolation).
    pub fn is_churned(&self, i: usize) -> bool {
        self.rejoin_at.contains_key(&i)
    }

    pub fn rejoin_at(&self, i: usize) -> Option<usize> {
        self.rejoin_at.get(&i).copied()
    }

    pub fn last_accessible(&self, i: usize) -> Option<usize> {
        self.last_accessible[i]
    }

    pub fn round(&self) -> Option<usize> {
        self.round
    }

    /// Nodes not held back by churn.
    pub fn churn_active(&self) -> Vec<bool> {
        (0..self.len()).map(|i| !self.is_churned(i)).collect()
    }

    /// Churn transition for round `t`: rejoins first, then dropouts among
    /// nodes that started the round un-churned. Does not settle the round.
    pub fn advance_churn<R: Rng + ?Sized>(&mut self, cfg: &ChurnConfig, t: usize, rng: &mut R) {
        let was_churned: Vec<bool> = (0..self.len()).map(|i| self.is_churned(i)).collect();
        self.rejoin_at.retain(|_, &mut r| r > t);
        for (i, &churned) in was_churned.iter().enumerate() {
            if churned {
                continue;
            }
            // One uniform per eligible node per round, whatever p is.
            let u: f64 = rng.random();
            if u < cfg.dropout_p {
                let d = sample_duration(cfg.lambda, rng);
                self.rejoin_at.insert(i, t + discretize_duration(d));
            }
        }
    }

    /// Fixes the accessible set for round `t`: un-churned nodes, further
    /// restricted to `reachable` when given.
    pub fn settle(&mut self, t: usize, reachable: Option<&[bool]>) {
        for i in 0..self.len() {
            let ok = !self.is_churned(i) && reachable.is_none_or(|m| m[i]);
            self.accessible[i] = ok;
            if ok {
                self.last_accessible[i] = Some(t);
            }
        }
        self.round = Some(t);
    }

    /// Inaccessible duration of node `i` at round `t`: rounds since it was last
    /// accessible, zero when accessible at `t`.
    pub fn tau(&self, t: usize, i: usize) -> Result<usize> {
        let last = self.last_accessible.get(i).ok_or(Error::UnknownNode(i))?;
        Ok(match *last {
            Some(l) => t.saturating_sub(l),
            None => t + 1,
        })
    }

    pub fn partition(&self) -> Partition {
        Partition::from_mask(&self.accessible)
    }

    /// Structural invariants of the churn bookkeeping.
    pub fn is_consistent(&self) -> bool {
        let Some(t) = self.round else {
            return self.rejoin_at.is_empty();
        };
        self.rejoin_at
            .iter()
            .all(|(&i, &r)| r > t && !self.accessible[i])
            && self
                .last_accessible
                .iter()
                .all(|l| l.is_none_or(|l| l <= t))
            && (0..self.len()).all(|i| !self.accessible[i] || self.last_accessible[i] == Some(t))
    }
}

pub fn step_accessibility<R: Rng + ?Sized>(
    state: &AccessibilityState,
    cfg: &ChurnConfig,
    t: usize,
    rng: &mut R,
) -> AccessibilityState {
    let mut next = state.clone();
    next.advance_churn(cfg, t, rng);
    next.settle(t, None);
    next
}

/// Split of the node set into `A(t)` and its complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub accessible: Vec<usize>,
    pub inaccessible: Vec<usize>,
}

impl Partition {
    pub fn from_mask(mask: &[bool]) -> Self {
        let (accessible, inaccessible) = (0..mask.len()).partition(|&i| mask[i]);
        Self {
            accessible,
            inaccessible,
        }
    }

    pub fn n1(&self) -> usize {
        self.accessible.len()
    }

    pub fn n2(&self) -> usize {
        self.inaccessible.len()
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2()
    }
}

pub fn partition_nodes(state: &AccessibilityState) -> Partition {
    state.partition()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    #[test]
    fn zero_dropout_keeps_everyone() {
        let cfg = ChurnConfig {
            dropout_p: 0.0,
            lambda: 1.0,
        };
        let mut rng = stream(1, Stream::Churn);
        let mut s = AccessibilityState::new(14);
        for t in 0..500 {
            s = step_accessibility(&s, &cfg, t, &mut rng);
            assert!(s.accessible().iter().all(|&a| a));
        }
    }

    #[test]
    fn duration_mean_matches_rate() {
        let lambda = 0.5;
        let mut rng = stream(11, Stream::Churn);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_duration(lambda, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn discretization_is_at_least_one_round() {
        assert_eq!(discretize_duration(0.0), 1);
        assert_eq!(discretize_duration(0.2), 1);
        assert_eq!(discretize_duration(1.0), 1);
        assert_eq!(discretize_duration(1.01), 2);
    }

    #[test]
    fn tau_is_zero_when_accessible() {
        let mut s = AccessibilityState::new(3);
        s.settle(4, None);
        assert_eq!(s.tau(4, 1).unwrap(), 0);
    }

    #[test]
    fn tau_counts_rounds_since_last_access() {
        let mut s = AccessibilityState::new(2);
        s.settle(5, None);
        s.rejoin_at.insert(0, 9);
        for t in 6..=8 {
            s.settle(t, None);
        }
        assert_eq!(s.tau(8, 0).unwrap(), 3);
        assert_eq!(s.tau(8, 1).unwrap(), 0);
        s.advance_churn(
            &ChurnConfig {
                dropout_p: 0.0,
                lambda: 1.0,
            },
            9,
            &mut stream(0, Stream::Churn),
        );
        s.settle(9, None);
        assert!(s.is_accessible(0));
        assert_eq!(s.tau(9, 0).unwrap(), 0);
    }

    #[test]
    fn tau_rejects_unknown_node() {
        let s = AccessibilityState::new(2);
        assert_eq!(s.tau(0, 2), Err(Error::UnknownNode(2)));
    }

    #[test]
    fn partition_counts() {
        let s = AccessibilityState::new(14);
        let p = partition_nodes(&s);
        assert_eq!((p.n1(), p.n2()), (14, 0));
        let mut mask = vec![true; 14];
        mask[6] = false;
        let p = Partition::from_mask(&mask);
        assert_eq!((p.n1(), p.n2()), (13, 1));
        assert_eq!(p.inaccessible, vec![6]);
    }

    #[test]
    fn rejoined_node_is_not_redropped_same_round() {
        let cfg = ChurnConfig {
            dropout_p: 1.0,
            lambda: 1.0,
        };
        let mut rng = stream(2, Stream::Churn);
        let mut s = AccessibilityState::new(1);
        s = step_accessibility(&s, &cfg, 0, &mut rng);
        assert!(!s.is_accessible(0));
        let back = s.rejoin_at(0).unwrap();
        for t in 1..back {
            s = step_accessibility(&s, &cfg, t, &mut rng);
            assert!(!s.is_accessible(0));
        }
        s = step_accessibility(&s, &cfg, back, &mut rng);
        assert!(s.is_accessible(0), "rejoin round must be accessible");
        s = step_accessibility(&s, &cfg, back + 1, &mut rng);
        assert!(!s.is_accessible(0));
    }

    #[test]
    fn reachability_mask_narrows_accessible_set() {
        let mut s = AccessibilityState::new(3);
        s.settle(0, Some(&[true, false, true]));
        assert_eq!(s.accessible(), &[true, false, true]);
        assert_eq!(s.tau(0, 1).unwrap(), 1);
        assert!(!s.is_churned(1));
    }

    #[test]
    fn validates_config() {
        assert!(ChurnConfig {
            dropout_p: 1.5,
            lambda: 1.0
        }
        .validate()
        .is_err());
        assert!(ChurnConfig {
            dropout_p: 0.5,
            lambda: 0.0
        }
        .validate()
        .is_err());
        assert!(ChurnConfig::default().validate().is_ok());
    }

    #[test]
    fn state_roundtrips_through_json() {
        let mut rng = stream(8, Stream::Churn);
        let mut s = AccessibilityState::new(6);
        let cfg = ChurnConfig {
            dropout_p: 0.5,
            lambda: 0.3,
        };
        for t in 0..10 {
            s = step_accessibility(&s, &cfg, t, &mut rng);
        }
        let json = serde_json::to_string(&s).unwrap();
        let back: AccessibilityState = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn churn_invariants(seed in any::<u64>(), p in 0.0f64..1.0, lambda in 0.1f64..3.0, n in 1usize..16) {
            let cfg = ChurnConfig { dropout_p: p, lambda };
            let mut rng = stream(seed, Stream::Churn);
            let mut s = AccessibilityState::new(n);
            let mut prev_tau = vec![0usize; n];
            for t in 0..120 {
                s = step_accessibility(&s, &cfg, t, &mut rng);
                prop_assert!(s.is_consistent());
                let part = s.partition();
                prop_assert_eq!(part.n1() + part.n2(), n);
                let mut seen = vec![false; n];
                for &i in part.accessible.iter().chain(&part.inaccessible) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
                prop_assert!(seen.iter().all(|&b| b));
                for i in 0..n {
                    let tau = s.tau(t, i).unwrap();
                    if s.is_accessible(i) {
                        prop_assert_eq!(tau, 0);
                    } else {
                        prop_assert_eq!(tau, prev_tau[i] + 1);
                    }
                    prev_tau[i] = tau;
                }
            }
        }
    }
}
