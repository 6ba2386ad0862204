//! Decision policies behind a single interface: SAO, SimpleSAO and the
//! UCB1, Exp3 and Exp3.P baselines.

use std::any::Any;
use std::fmt;

use rand::{Rng, RngCore};

use crate::bandit::{Phase, TestId};
use crate::error::{Error, Result};

mod exp3;
mod exp3p;
mod sao;
mod simple_sao;
mod ucb1;

pub use exp3::Exp3;
pub use exp3p::Exp3P;
pub use sao::{ActiveSetMode, BetaMode, Sao, SaoConfig};
pub use simple_sao::{SimpleSao, SimpleSaoConfig, SimplePhase};
pub use ucb1::Ucb1;

/// Distribution and draw for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub probs: Vec<f64>,
    pub arm: usize,
    pub phase: Phase,
}

/// A bandit policy.
///
/// Per round the harness calls [`Policy::select`] once and then
/// [`Policy::observe`] once with the selected arm and its reward. Rounds are
/// numbered from 1.
pub trait Policy: Send + fmt::Debug {
    fn name(&self) -> &'static str;

    fn num_arms(&self) -> usize;

    fn horizon(&self) -> u64;

    fn select(&mut self, t: u64, rng: &mut dyn RngCore) -> Result<Selection>;

    /// Returns the test that fired after this round, if any.
    fn observe(&mut self, t: u64, arm: usize, reward: f64) -> Result<Option<TestId>>;

    fn summary(&self) -> PolicySummary;

    fn as_any(&self) -> &dyn Any;
}

/// End-of-episode view of a policy's internal state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicySummary {
    pub name: &'static str,
    /// Last round before Exp3.P took over (`tau_0`), if it ever did.
    pub switch_round: Option<u64>,
    pub switch_test: Option<TestId>,
    /// Per-arm deactivation rounds (SAO only).
    pub deactivations: Vec<Option<u64>>,
    /// Per-arm probability frozen at deactivation (SAO only).
    pub frozen_probs: Vec<Option<f64>>,
    /// Exploration length `tau*` (SimpleSAO only).
    pub exploration_length: Option<u64>,
    pub leader: Option<usize>,
}

/// Draws an index from `probs` by inverting the CDF at one uniform.
pub fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn check_round(t: u64, horizon: u64) -> Result<()> {
    if t == 0 || t > horizon {
        Err(Error::HorizonExceeded { t, horizon })
    } else {
        Ok(())
    }
}

pub(crate) fn check_arm(arm: usize, arms: usize) -> Result<()> {
    if arm < arms {
        Ok(())
    } else {
        Err(Error::InvalidArm { arm, arms })
    }
}

pub(crate) fn check_reward(arm: usize, reward: f64) -> Result<()> {
    if (0.0..=1.0).contains(&reward) {
        Ok(())
    } else {
        Err(Error::InvalidReward { arm, reward })
    }
}

/// `(1 - gamma) softmax(log_weights) + gamma / K`.
pub(crate) fn mixed_softmax(log_weights: &[f64], gamma: f64, out: &mut Vec<f64>) {
    let k = log_weights.len() as f64;
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(log_weights.iter().map(|w| (w - max).exp()));
    let total: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p = (1.0 - gamma) * *p / total + gamma / k;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_index_follows_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = [0.2, 0.0, 0.8];
        let mut counts = [0u32; 3];
        for _ in 0..20_000 {
            counts[sample_index(&probs, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        let frac = counts[0] as f64 / 20_000.0;
        assert!((frac - 0.2).abs() < 3.0 * (0.16f64 / 20_000.0).sqrt() + 1e-3);
    }

    #[test]
    fn mixed_softmax_is_a_simplex() {
        let mut out = Vec::new();
        mixed_softmax(&[1000.0, -5.0, 3.0], 0.1, &mut out);
        crate::bandit::check_simplex(&out).unwrap();
        assert!(out.iter().all(|&p| p >= 0.1 / 3.0));
    }
}
