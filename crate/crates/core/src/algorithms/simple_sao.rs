use std::any::Any;

use rand::RngCore;

use super::{check_arm, check_reward, check_round, sample_index, Exp3P, Policy, PolicySummary, Selection};
use crate::bandit::{ArmStats, Phase, TestId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SimplePhase {
    Exploration,
    Exploitation,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleSaoConfig {
    pub horizon: u64,
    /// Threshold constant `C_crn`.
    pub ccrn: f64,
    /// Exploration cannot end at or before this round.
    pub exploration_floor: f64,
    /// Confidence of the Exp3.P fallback.
    pub delta: f64,
}

impl SimpleSaoConfig {
    pub const FAITHFUL_CCRN_MULTIPLIER: f64 = 12.0;
    pub const DEFAULT_FLOOR_MULTIPLIER: f64 = 8.0;

    /// `C_crn = 12 ln n`, floor `8 C_crn^2`.
    pub fn new(horizon: u64) -> Self {
        Self::with_multipliers(
            horizon,
            Self::FAITHFUL_CCRN_MULTIPLIER,
            Self::DEFAULT_FLOOR_MULTIPLIER,
        )
    }

    /// `C_crn = c ln n` and floor `f C_crn^2`.
    pub fn with_multipliers(horizon: u64, ccrn_multiplier: f64, floor_multiplier: f64) -> Self {
        let ccrn = ccrn_multiplier * (horizon as f64).ln();
        SimpleSaoConfig {
            horizon,
            ccrn,
            exploration_floor: floor_multiplier * ccrn * ccrn,
            delta: 0.05,
        }
    }

    /// Sets `C_crn` directly, keeping the floor at `8 C_crn^2`.
    pub fn with_ccrn(horizon: u64, ccrn: f64) -> Self {
        SimpleSaoConfig {
            horizon,
            ccrn,
            exploration_floor: Self::DEFAULT_FLOOR_MULTIPLIER * ccrn * ccrn,
            delta: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::config("horizon", "need n >= K = 2"));
        }
        if !(self.ccrn > 0.0 && self.ccrn.is_finite()) {
            return Err(Error::config("ccrn", "must be positive"));
        }
        if !(self.exploration_floor >= 0.0) {
            return Err(Error::config("exploration_floor", "must be non-negative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("{} outside (0, 1)", self.delta)));
        }
        Ok(())
    }

    /// Gap the estimates must reach at round `t` to leave exploration.
    pub fn exploration_threshold(&self, t: u64) -> f64 {
        24.0 * self.ccrn / (t as f64).sqrt()
    }
}

/// The two-armed three-phase algorithm.
///
/// Exploration plays both arms with probability 1/2 until, past the floor,
/// the estimated averages differ by at least `24 C / sqrt(t)`. Exploitation
/// then plays the other arm with probability `tau* / (2t)` and after each
/// round checks
///
/// ```text
/// 8 C / sqrt(tau*) <= H~_lead - H~_other <= 40 C / sqrt(tau*)
/// |H~_lead - H^_lead| <= 6 C / sqrt(t),   |H~_other - H^_other| <= 6 C / sqrt(tau*)
/// ```
///
/// and runs Exp3.P for the rest of the horizon once any of them fails.
#[derive(Debug, Clone)]
pub struct SimpleSao {
    config: SimpleSaoConfig,
    phase: SimplePhase,
    tau_star: Option<u64>,
    leader: Option<usize>,
    stats: ArmStats<f64>,
    probs: Vec<f64>,
    switch_round: Option<u64>,
    switch_test: Option<TestId>,
    fallback: Option<Exp3P>,
}

impl SimpleSao {
    pub fn new(config: SimpleSaoConfig) -> Result<Self> {
        config.validate()?;
        Ok(SimpleSao {
            config,
            phase: SimplePhase::Exploration,
            tau_star: None,
            leader: None,
            stats: ArmStats::new(2),
            probs: vec![0.5, 0.5],
            switch_round: None,
            switch_test: None,
            fallback: None,
        })
    }

    pub fn phase(&self) -> SimplePhase {
        self.phase
    }

    pub fn tau_star(&self) -> Option<u64> {
        self.tau_star
    }

    pub fn leader(&self) -> Option<usize> {
        self.leader
    }

    pub fn switch_round(&self) -> Option<u64> {
        self.switch_round
    }

    pub fn config(&self) -> &SimpleSaoConfig {
        &self.config
    }

    /// `(p_lead, p_other)` during exploitation round `t`.
    pub fn exploitation_probs(tau_star: u64, t: u64) -> (f64, f64) {
        let other = tau_star as f64 / (2.0 * t as f64);
        (1.0 - other, other)
    }

    fn check_consistency(&self, t: u64) -> Result<Option<TestId>> {
        let (lead, tau_star) = match (self.leader, self.tau_star) {
            (Some(l), Some(ts)) => (l, ts),
            _ => return Ok(None),
        };
        let other = 1 - lead;
        let c = self.config.ccrn;
        let root_tau = (tau_star as f64).sqrt();
        let h_lead = self.stats.estimated_average(lead, t)?;
        let h_other = self.stats.estimated_average(other, t)?;
        let gap = h_lead - h_other;
        if gap < 8.0 * c / root_tau || gap > 40.0 * c / root_tau {
            return Ok(Some(TestId::Cond2));
        }
        if self.stats.samples(lead) > 0 {
            let realized = self.stats.realized_average(lead)?;
            if (h_lead - realized).abs() > 6.0 * c / (t as f64).sqrt() {
                return Ok(Some(TestId::Cond3));
            }
        }
        if self.stats.samples(other) > 0 {
            let realized = self.stats.realized_average(other)?;
            if (h_other - realized).abs() > 6.0 * c / root_tau {
                return Ok(Some(TestId::Cond3));
            }
        }
        Ok(None)
    }
}

impl Policy for SimpleSao {
    fn name(&self) -> &'static str {
        "simple-sao"
    }

    fn num_arms(&self) -> usize {
        2
    }

    fn horizon(&self) -> u64 {
        self.config.horizon
    }

    fn select(&mut self, t: u64, rng: &mut dyn RngCore) -> Result<Selection> {
        check_round(t, self.config.horizon)?;
        let phase = match self.phase {
            SimplePhase::Exploration => Phase::Exploration,
            SimplePhase::Exploitation => {
                let (lead, tau_star) = self.leader.zip(self.tau_star).expect("set on phase change");
                let (p_lead, p_other) = Self::exploitation_probs(tau_star, t);
                self.probs[lead] = p_lead;
                self.probs[1 - lead] = p_other;
                Phase::Exploitation
            }
            SimplePhase::Adversarial => {
                let tau0 = self.switch_round.expect("set on phase change");
                let fallback = self.fallback.as_mut().ok_or(Error::HorizonExceeded {
                    t,
                    horizon: self.config.horizon,
                })?;
                let mut s = fallback.select(t - tau0, rng)?;
                s.phase = Phase::Adversarial;
                return Ok(s);
            }
        };
        Ok(Selection {
            arm: sample_index(&self.probs, rng),
            probs: self.probs.clone(),
            phase,
        })
    }

    fn observe(&mut self, t: u64, arm: usize, reward: f64) -> Result<Option<TestId>> {
        check_round(t, self.config.horizon)?;
        check_arm(arm, 2)?;
        check_reward(arm, reward)?;
        match self.phase {
            SimplePhase::Adversarial => {
                let tau0 = self.switch_round.expect("set on phase change");
                match self.fallback.as_mut() {
                    Some(f) => f.observe(t - tau0, arm, reward),
                    None => Err(Error::HorizonExceeded {
                        t,
                        horizon: self.config.horizon,
                    }),
                }
            }
            SimplePhase::Exploration => {
                self.stats.record_round(arm, reward, self.probs[arm])?;
                let h0 = self.stats.estimated_average(0, t)?;
                let h1 = self.stats.estimated_average(1, t)?;
                let past_floor = t as f64 > self.config.exploration_floor;
                if past_floor && (h0 - h1).abs() >= self.config.exploration_threshold(t) {
                    self.tau_star = Some(t);
                    self.leader = Some(if h1 > h0 { 1 } else { 0 });
                    self.phase = SimplePhase::Exploitation;
                    return Ok(Some(TestId::ExplorationExit1));
                }
                Ok(None)
            }
            SimplePhase::Exploitation => {
                self.stats.record_round(arm, reward, self.probs[arm])?;
                let fired = self.check_consistency(t)?;
                if let Some(test) = fired {
                    self.phase = SimplePhase::Adversarial;
                    self.switch_round = Some(t);
                    self.switch_test = Some(test);
                    let remaining = self.config.horizon - t;
                    if remaining > 0 {
                        self.fallback = Some(Exp3P::new(2, remaining, self.config.delta)?);
                    }
                }
                Ok(fired)
            }
        }
    }

    fn summary(&self) -> PolicySummary {
        PolicySummary {
            name: self.name(),
            switch_round: self.switch_round,
            switch_test: self.switch_test,
            exploration_length: self.tau_star,
            leader: self.leader,
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
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn faithful_threshold_is_vacuous_at_ten_thousand_rounds() {
        let cfg = SimpleSaoConfig::new(10_000);
        assert_relative_eq!(cfg.ccrn, 110.52, epsilon = 0.01);
        assert_relative_eq!(cfg.exploration_threshold(10_000), 26.53, epsilon = 0.01);
        // Estimated averages of [0,1] rewards at p = 1/2 differ by at most 2.
        assert!(cfg.exploration_threshold(10_000) > 2.0);
    }

    #[test]
    fn exploitation_schedule() {
        let (lead, other) = SimpleSao::exploitation_probs(300, 600);
        assert_eq!(other, 0.25);
        assert_eq!(lead, 0.75);
    }

    #[test]
    fn phases_move_forward_only() {
        let mut p = SimpleSao::new(SimpleSaoConfig::with_ccrn(10_000, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut last = p.phase();
        for t in 1..=10_000 {
            let s = p.select(t, &mut rng).unwrap();
            let g = if rng.gen::<f64>() < [0.9, 0.1][s.arm] { 1.0 } else { 0.0 };
            p.observe(t, s.arm, g).unwrap();
            assert!(p.phase() >= last);
            assert_eq!(p.tau_star().is_some(), p.phase() != SimplePhase::Exploration);
            last = p.phase();
        }
        assert_eq!(p.leader(), Some(0));
    }

    #[test]
    fn exit_happens_exactly_at_threshold_crossing() {
        // Deterministic rewards: arm 0 pays 1, arm 1 pays 0.
        let cfg = SimpleSaoConfig::with_ccrn(5_000, 1.0);
        let mut p = SimpleSao::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g0 = 0.0;
        for t in 1..=5_000u64 {
            let s = p.select(t, &mut rng).unwrap();
            let reward = if s.arm == 0 { 1.0 } else { 0.0 };
            if s.arm == 0 {
                g0 += 2.0;
            }
            let fired = p.observe(t, s.arm, reward).unwrap();
            let expect_exit = p.tau_star().is_none() || p.tau_star() == Some(t);
            if expect_exit {
                let should = t as f64 > cfg.exploration_floor
                    && g0 / t as f64 >= cfg.exploration_threshold(t);
                assert_eq!(fired == Some(TestId::ExplorationExit1), should, "t={t}");
                if should {
                    break;
                }
            }
        }
        assert!(p.tau_star().is_some());
    }

    #[test]
    fn exploration_length_matches_gap_oracle() {
        // Leaving exploration needs |H~_0 - H~_1| >= 24 C / sqrt(t); with C = 1
        // and an expected gap of 0.8 that is t = (24 / 0.8)^2 = 900.
        let oracle = (24.0f64 / 0.8).powi(2);
        let mut taus = Vec::new();
        for seed in 0..101 {
            let mut p = SimpleSao::new(SimpleSaoConfig::with_ccrn(3_000, 1.0)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0;
            while p.tau_star().is_none() {
                t += 1;
                let s = p.select(t, &mut rng).unwrap();
                let g = if rng.gen::<f64>() < [0.9, 0.1][s.arm] { 1.0 } else { 0.0 };
                p.observe(t, s.arm, g).unwrap();
            }
            taus.push(p.tau_star().unwrap());
        }
        taus.sort_unstable();
        let median = taus[50] as f64;
        assert!((median - oracle).abs() / oracle < 0.1, "median tau* = {median}");
    }
}
