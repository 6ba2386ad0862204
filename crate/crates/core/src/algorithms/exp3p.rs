use std::any::Any;

use rand::RngCore;

use super::{check_arm, check_reward, check_round, mixed_softmax, sample_index, Policy, PolicySummary, Selection};
use crate::bandit::{Phase, TestId};
use crate::error::{Error, Result};

/// Exp3.P: exponential weights over optimistically biased importance-weighted
/// gains, mixed with uniform exploration.
///
/// Tuned for a known horizon `n` and confidence `delta`:
///
/// ```text
/// bias  = sqrt(ln(K/delta) / (n K))
/// eta   = 0.95 sqrt(ln K / (n K))
/// gamma = 1.05 sqrt(K ln K / n)        (capped at 1)
/// p_i   = (1 - gamma) exp(eta G_i) / sum_j exp(eta G_j) + gamma / K
/// G_i  += (g_i 1{I = i} + bias) / p_i  for every arm i
/// ```
///
/// With this tuning the regret over `n` rounds is at most
/// `5.15 sqrt(n K ln(K/delta))` with probability `1 - delta`.
#[derive(Debug, Clone)]
pub struct Exp3P {
    horizon: u64,
    delta: f64,
    gamma: f64,
    eta: f64,
    bias: f64,
    log_weights: Vec<f64>,
    probs: Vec<f64>,
    phase: Phase,
}

impl Exp3P {
    pub fn new(arms: usize, horizon: u64, delta: f64) -> Result<Self> {
        if arms < 2 {
            return Err(Error::config("arms", "Exp3.P needs at least two arms"));
        }
        if horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", format!("{delta} outside (0, 1)")));
        }
        let k = arms as f64;
        let n = horizon as f64;
        let mut p = Exp3P {
            horizon,
            delta,
            gamma: (1.05 * (k * k.ln() / n).sqrt()).min(1.0),
            eta: 0.95 * (k.ln() / (n * k)).sqrt(),
            bias: ((k / delta).ln() / (n * k)).sqrt(),
            log_weights: vec![0.0; arms],
            probs: vec![1.0 / k; arms],
            phase: Phase::Exp3P,
        };
        p.refresh();
        Ok(p)
    }

    /// Same algorithm, tagged as SAO's fallback in traces.
    pub(crate) fn as_fallback(mut self) -> Self {
        self.phase = Phase::SaoFallback;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `5.15 sqrt(n K ln(K/delta))`.
    pub fn regret_envelope(arms: usize, horizon: u64, delta: f64) -> f64 {
        let k = arms as f64;
        5.15 * (horizon as f64 * k * (k / delta).ln()).sqrt()
    }

    fn refresh(&mut self) {
        let mut probs = std::mem::take(&mut self.probs);
        mixed_softmax(&self.log_weights, self.gamma, &mut probs);
        self.probs = probs;
    }
}

impl Policy for Exp3P {
    fn name(&self) -> &'static str {
        "exp3p"
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
            phase: self.phase,
        })
    }

    fn observe(&mut self, t: u64, arm: usize, reward: f64) -> Result<Option<TestId>> {
        check_round(t, self.horizon)?;
        check_arm(arm, self.num_arms())?;
        check_reward(arm, reward)?;
        for (i, (w, &p)) in self.log_weights.iter_mut().zip(&self.probs).enumerate() {
            let gain = if i == arm { reward + self.bias } else { self.bias };
            *w += self.eta * gain / p;
        }
        self.refresh();
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
    fn parameters() {
        let p = Exp3P::new(2, 10_000, 0.01).unwrap();
        let ln2 = 2f64.ln();
        assert!((p.gamma - 1.05 * (2.0 * ln2 / 1e4).sqrt()).abs() < 1e-15);
        assert!((p.eta - 0.95 * (ln2 / 2e4).sqrt()).abs() < 1e-15);
        assert!((p.bias - (200f64.ln() / 2e4).sqrt()).abs() < 1e-15);
        assert!(Exp3P::new(2, 10, 1.0).is_err());
        assert!(Exp3P::new(1, 10, 0.1).is_err());
        // Short horizons saturate to uniform play.
        assert_eq!(Exp3P::new(8, 4, 0.1).unwrap().gamma(), 1.0);
    }

    #[test]
    fn envelope_value() {
        // 5.15 sqrt(1e4 * 2 * ln 200)
        let e = Exp3P::regret_envelope(2, 10_000, 0.01);
        assert!((e - 1677.0).abs() < 1.0, "{e}");
    }

    #[test]
    fn floor_and_convergence_on_constant_gap() {
        let n = 10_000;
        let mut p = Exp3P::new(2, n, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut collected = 0.0;
        for t in 1..=n {
            let s = p.select(t, &mut rng).unwrap();
            assert!(s.probs.iter().all(|&q| q >= p.gamma() / 2.0 - 1e-15));
            let g = if s.arm == 0 { 1.0 } else { 0.0 };
            collected += g;
            p.observe(t, s.arm, g).unwrap();
        }
        let regret = n as f64 - collected;
        assert!(regret < Exp3P::regret_envelope(2, n, 0.01), "{regret}");
        assert!(p.probabilities()[0] > 0.9);
        assert!(p.select(n + 1, &mut rng).is_err());
    }
}
