use std::any::Any;

use rand::RngCore;

use super::{check_arm, check_reward, check_round, mixed_softmax, sample_index, Policy, PolicySummary, Selection};
use crate::bandit::{Phase, TestId};
use crate::error::{Error, Result};

/// Exp3 with uniform mixing, tuned for a known horizon:
/// `gamma = min(1, sqrt(K ln K / ((e - 1) n)))` and weights
/// `w_i <- w_i exp(gamma x_i / (p_i K))` for the played arm.
#[derive(Debug, Clone)]
pub struct Exp3 {
    horizon: u64,
    gamma: f64,
    log_weights: Vec<f64>,
    probs: Vec<f64>,
}

impl Exp3 {
    pub fn new(arms: usize, horizon: u64) -> Result<Self> {
        if arms < 2 {
            return Err(Error::config("arms", "Exp3 needs at least two arms"));
        }
        let k = arms as f64;
        let gamma = (k * k.ln() / ((std::f64::consts::E - 1.0) * horizon as f64))
            .sqrt()
            .min(1.0);
        Self::with_gamma(arms, horizon, gamma)
    }

    pub fn with_gamma(arms: usize, horizon: u64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::config("gamma", format!("{gamma} outside (0, 1]")));
        }
        Ok(Exp3 {
            horizon,
            gamma,
            log_weights: vec![0.0; arms],
            probs: vec![1.0 / arms as f64; arms],
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

impl Policy for Exp3 {
    fn name(&self) -> &'static str {
        "exp3"
    }

    fn num_arms(&self) -> usize {
        self.log_weights.len()
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn select(&mut self, t: u64, rng: &mut dyn RngCore) -> Result<Selection> {
        check_round(t, self.horizon)?;
        Ok(Selection {
            arm: sample_index(&self.probs, rng),
            probs: self.probs.clone(),
            phase: Phase::Exp3,
        })
    }

    fn observe(&mut self, t: u64, arm: usize, reward: f64) -> Result<Option<TestId>> {
        check_round(t, self.horizon)?;
        check_arm(arm, self.num_arms())?;
        check_reward(arm, reward)?;
        let k = self.num_arms() as f64;
        self.log_weights[arm] += self.gamma * reward / (self.probs[arm] * k);
        let mut probs = std::mem::take(&mut self.probs);
        mixed_softmax(&self.log_weights, self.gamma, &mut probs);
        self.probs = probs;
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
    fn equal_rewards_keep_uniform() {
        let mut p = Exp3::new(4, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 1..=1000 {
            let s = p.select(t, &mut rng).unwrap();
            for q in &s.probs {
                assert!((q - 0.25).abs() < 1e-12);
            }
            p.observe(t, s.arm, 0.0).unwrap();
        }
    }

    #[test]
    fn favours_the_rewarding_arm() {
        let mut p = Exp3::new(3, 5000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=5000 {
            let s = p.select(t, &mut rng).unwrap();
            p.observe(t, s.arm, if s.arm == 2 { 1.0 } else { 0.2 }).unwrap();
        }
        assert!(p.probabilities()[2] > 0.8);
        assert!(p.probabilities().iter().all(|&q| q >= p.gamma() / 3.0 - 1e-15));
    }
}
