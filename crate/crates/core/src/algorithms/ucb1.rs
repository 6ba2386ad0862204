use std::any::Any;

use rand::RngCore;

use super::{check_arm, check_reward, check_round, Policy, PolicySummary, Selection};
use crate::bandit::{argmax, Phase, TestId};
use crate::error::{Error, Result};

/// UCB1: each arm once, then the arm maximizing
/// `mean_i + sqrt(2 ln s / T_i)` with `s` the number of plays so far.
/// Deterministic, so the reported distribution is a point mass.
#[derive(Debug, Clone)]
pub struct Ucb1 {
    horizon: u64,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl Ucb1 {
    pub fn new(arms: usize, horizon: u64) -> Result<Self> {
        if arms < 2 {
            return Err(Error::config("arms", "UCB1 needs at least two arms"));
        }
        Ok(Ucb1 {
            horizon,
            counts: vec![0; arms],
            sums: vec![0.0; arms],
        })
    }

    fn choose(&self) -> usize {
        if let Some(unplayed) = self.counts.iter().position(|&c| c == 0) {
            return unplayed;
        }
        let plays: u64 = self.counts.iter().sum();
        let log = (plays as f64).ln();
        let index: Vec<f64> = self
            .counts
            .iter()
            .zip(&self.sums)
            .map(|(&c, &s)| s / c as f64 + (2.0 * log / c as f64).sqrt())
            .collect();
        argmax(&index)
    }
}

impl Policy for Ucb1 {
    fn name(&self) -> &'static str {
        "ucb1"
    }

    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn select(&mut self, t: u64, _rng: &mut dyn RngCore) -> Result<Selection> {
        check_round(t, self.horizon)?;
        let arm = self.choose();
        let mut probs = vec![0.0; self.num_arms()];
        probs[arm] = 1.0;
        Ok(Selection {
            probs,
            arm,
            phase: Phase::Ucb1,
        })
    }

    fn observe(&mut self, t: u64, arm: usize, reward: f64) -> Result<Option<TestId>> {
        check_round(t, self.horizon)?;
        check_arm(arm, self.num_arms())?;
        check_reward(arm, reward)?;
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        Ok(None)
    }

    fn summary(&self) -> PolicySummary {
        PolicySummary {
            name: self.name(),
            ..PolicySummary::default()
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_rounds_play_each_arm_in_order() {
        let mut p = Ucb1::new(5, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 1..=5 {
            let s = p.select(t, &mut rng).unwrap();
            assert_eq!(s.arm, (t - 1) as usize);
            assert_eq!(s.probs[s.arm], 1.0);
            p.observe(t, s.arm, 0.5).unwrap();
        }
    }

    #[test]
    fn concentrates_on_best_arm() {
        let mut p = Ucb1::new(2, 2000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut best = 0;
        for t in 1..=2000 {
            let s = p.select(t, &mut rng).unwrap();
            best += (s.arm == 1) as u32;
            p.observe(t, s.arm, if s.arm == 1 { 0.9 } else { 0.1 }).unwrap();
        }
        assert!(best > 1900);
    }
}
