use std::any::Any;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_arm, check_reward, check_round, sample_index, Exp3P, Policy, PolicySummary, Selection};
use crate::bandit::{ArmStats, Phase, TestId};
use crate::error::{Error, Result};

/// How the confidence parameter `beta` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    /// `beta = n^4`, the expectation-mode tuning.
    N4,
    /// `beta = 10 K n^3 / delta`, the high-probability tuning.
    HighProb,
    /// A fixed `beta > 1`, for desk-scale experiments.
    Explicit(f64),
}

/// Which active set the consistency tests compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActiveSetMode {
    /// The set as updated by deactivations earlier in the same round.
    #[default]
    Live,
    /// The set as it stood at the start of the round.
    Snapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaoConfig {
    pub arms: usize,
    pub horizon: u64,
    pub beta_mode: BetaMode,
    /// Confidence for the high-probability `beta` and the Exp3.P fallback.
    pub delta: f64,
    /// Multiplies the leading constants 6, 10 and 2 of the gap tests.
    pub gap_scale: f64,
    pub active_set_mode: ActiveSetMode,
}

impl SaoConfig {
    pub fn new(arms: usize, horizon: u64) -> Self {
        SaoConfig {
            arms,
            horizon,
            beta_mode: BetaMode::N4,
            delta: 0.05,
            gap_scale: 1.0,
            active_set_mode: ActiveSetMode::Live,
        }
    }

    pub fn beta_mode(mut self, mode: BetaMode) -> Self {
        self.beta_mode = mode;
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn gap_scale(mut self, scale: f64) -> Self {
        self.gap_scale = scale;
        self
    }

    pub fn active_set_mode(mut self, mode: ActiveSetMode) -> Self {
        self.active_set_mode = mode;
        self
    }

    /// `log(beta)`, computed without forming `beta` itself.
    pub fn log_beta(&self) -> f64 {
        let n = (self.horizon as f64).ln();
        match self.beta_mode {
            BetaMode::N4 => 4.0 * n,
            BetaMode::HighProb => {
                10f64.ln() + (self.arms as f64).ln() + 3.0 * n - self.delta.ln()
            }
            BetaMode::Explicit(beta) => beta.ln(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms < 2 {
            return Err(Error::config("arms", "need K >= 2"));
        }
        if self.horizon < self.arms as u64 {
            return Err(Error::config("horizon", "need n >= K >= 2"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("{} outside (0, 1)", self.delta)));
        }
        if let BetaMode::Explicit(beta) = self.beta_mode {
            if !(beta > 1.0) {
                return Err(Error::config("beta", format!("{beta} must exceed 1")));
            }
        }
        if !(self.gap_scale > 0.0 && self.gap_scale.is_finite()) {
            return Err(Error::config("gap_scale", "must be positive"));
        }
        Ok(())
    }
}

/// `sqrt(4 K log(beta) / x + 5 (K log(beta) / x)^2)`, the radius shared by the
/// deactivation test and the two suboptimality tests.
pub fn gap_radius(arms: usize, log_beta: f64, x: f64) -> f64 {
    let r = arms as f64 * log_beta / x;
    (4.0 * r + 5.0 * r * r).sqrt()
}

/// Threshold for `|H~_i - H^_i|`.
///
/// `decay` is `(t - tau_i) / (q_i tau_i t)` for an arm deactivated before
/// round `t` and zero otherwise; `t_star = min(tau_i, t)`.
pub fn consistency_threshold(
    arms: usize,
    log_beta: f64,
    t: u64,
    t_star: u64,
    plays: u64,
    decay: f64,
) -> f64 {
    let k = arms as f64;
    let t = t as f64;
    let ts = t_star as f64;
    let variance = k * ts / (t * t) + decay;
    let b = k * log_beta / ts;
    (2.0 * log_beta / plays as f64).sqrt() + (4.0 * variance * log_beta + 5.0 * b * b).sqrt()
}

/// SAO: successive deactivation of apparently suboptimal arms with
/// consistency checks, falling back to Exp3.P when rewards stop looking
/// stochastic.
///
/// Each round the arm is drawn from `p`. Then, for arms in increasing index,
/// the deactivation test runs first and the three consistency tests after it;
/// the first consistency test that holds sets `tau_0 = t` and hands every
/// later round to Exp3.P over the remaining `n - tau_0` rounds. Otherwise an
/// inactive arm keeps `p_i = q_i tau_i / (t + 1)` and the active arms share
/// the rest equally.
#[derive(Debug, Clone)]
pub struct Sao {
    config: SaoConfig,
    log_beta: f64,
    active: Vec<bool>,
    active_count: usize,
    tau: Vec<u64>,
    q: Vec<f64>,
    probs: Vec<f64>,
    stats: ArmStats<f64>,
    switch_round: Option<u64>,
    switch_test: Option<TestId>,
    fallback: Option<Exp3P>,
    // Scratch for the per-round average estimates.
    est: Vec<f64>,
}

impl Sao {
    pub fn new(config: SaoConfig) -> Result<Self> {
        config.validate()?;
        let k = config.arms;
        Ok(Sao {
            log_beta: config.log_beta(),
            active: vec![true; k],
            active_count: k,
            tau: vec![config.horizon; k],
            q: vec![0.0; k],
            probs: vec![1.0 / k as f64; k],
            stats: ArmStats::new(k),
            switch_round: None,
            switch_test: None,
            fallback: None,
            est: vec![0.0; k],
            config,
        })
    }

    pub fn config(&self) -> &SaoConfig {
        &self.config
    }

    pub fn log_beta(&self) -> f64 {
        self.log_beta
    }

    pub fn is_active(&self, arm: usize) -> bool {
        self.active[arm]
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    /// `tau_i`; equals the horizon while the arm is active.
    pub fn deactivation_round(&self, arm: usize) -> u64 {
        self.tau[arm]
    }

    /// `q_i`, defined once the arm is inactive.
    pub fn frozen_prob(&self, arm: usize) -> Option<f64> {
        (!self.active[arm]).then_some(self.q[arm])
    }

    /// Distribution for the next stochastic-phase round.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `tau_0`, once Exp3.P has taken over.
    pub fn switch_round(&self) -> Option<u64> {
        self.switch_round
    }

    pub fn stats(&self) -> &ArmStats<f64> {
        &self.stats
    }

    fn max_estimate(&self, members: &[bool]) -> f64 {
        self.est
            .iter()
            .zip(members)
            .filter(|(_, &m)| m)
            .map(|(&h, _)| h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Runs the per-arm tests after round `t`. Returns the switch test if one
    /// fired, and whether any arm was deactivated.
    fn run_tests(&mut self, t: u64) -> Result<(Option<TestId>, bool)> {
        let k = self.config.arms;
        let lb = self.log_beta;
        let scale = self.config.gap_scale;
        for i in 0..k {
            self.est[i] = self.stats.estimated_average(i, t)?;
        }
        let snapshot = match self.config.active_set_mode {
            ActiveSetMode::Snapshot => Some(self.active.clone()),
            ActiveSetMode::Live => None,
        };
        let mut deactivated = false;
        let radius_t = gap_radius(k, lb, t as f64);

        for i in 0..k {
            let members = snapshot.as_deref().unwrap_or(&self.active);
            let gap = self.max_estimate(members) - self.est[i];
            if self.active[i] && gap > 6.0 * scale * radius_t {
                self.active[i] = false;
                self.active_count -= 1;
                self.tau[i] = t;
                self.q[i] = self.probs[i];
                deactivated = true;
            }

            let members = snapshot.as_deref().unwrap_or(&self.active);
            let gap = self.max_estimate(members) - self.est[i];
            let plays = self.stats.samples(i);
            if plays > 0 {
                let tau = self.tau[i];
                let decay = if t > tau {
                    (t - tau) as f64 / (self.q[i] * tau as f64 * t as f64)
                } else {
                    0.0
                };
                let threshold = consistency_threshold(k, lb, t, tau.min(t), plays, decay);
                let realized = self.stats.realized_average(i)?;
                if (self.est[i] - realized).abs() > threshold {
                    return Ok((Some(TestId::Consistency8), deactivated));
                }
            }
            if !self.active[i] {
                let tau = self.tau[i];
                if tau >= 2 && gap > 10.0 * scale * gap_radius(k, lb, (tau - 1) as f64) {
                    return Ok((Some(TestId::Consistency9), deactivated));
                }
                if gap <= 2.0 * scale * gap_radius(k, lb, tau as f64) {
                    return Ok((Some(TestId::Consistency10), deactivated));
                }
            }
        }
        Ok((None, deactivated))
    }

    fn update_probabilities(&mut self, t: u64) {
        let next = (t + 1) as f64;
        let mut inactive_mass = 0.0;
        for i in 0..self.config.arms {
            if !self.active[i] {
                self.probs[i] = self.q[i] * self.tau[i] as f64 / next;
                inactive_mass += self.probs[i];
            }
        }
        let share = (1.0 - inactive_mass) / self.active_count as f64;
        for i in 0..self.config.arms {
            if self.active[i] {
                self.probs[i] = share;
            }
        }
    }
}

impl Policy for Sao {
    fn name(&self) -> &'static str {
        "sao"
    }

    fn num_arms(&self) -> usize {
        self.config.arms
    }

    fn horizon(&self) -> u64 {
        self.config.horizon
    }

    fn select(&mut self, t: u64, rng: &mut dyn RngCore) -> Result<Selection> {
        check_round(t, self.config.horizon)?;
        if let (Some(tau0), Some(fallback)) = (self.switch_round, self.fallback.as_mut()) {
            return fallback.select(t - tau0, rng);
        }
        Ok(Selection {
            arm: sample_index(&self.probs, rng),
            probs: self.probs.clone(),
            phase: Phase::SaoStochastic,
        })
    }

    fn observe(&mut self, t: u64, arm: usize, reward: f64) -> Result<Option<TestId>> {
        check_round(t, self.config.horizon)?;
        check_arm(arm, self.config.arms)?;
        check_reward(arm, reward)?;
        if let Some(tau0) = self.switch_round {
            return match self.fallback.as_mut() {
                Some(fallback) => fallback.observe(t - tau0, arm, reward),
                None => Err(Error::HorizonExceeded {
                    t,
                    horizon: self.config.horizon,
                }),
            };
        }
        if t != self.stats.rounds() + 1 {
            return Err(Error::ModelMismatch("rounds must be observed in order"));
        }
        self.stats.record_round(arm, reward, self.probs[arm])?;

        let (switch, deactivated) = self.run_tests(t)?;
        if let Some(test) = switch {
            self.switch_round = Some(t);
            self.switch_test = Some(test);
            let remaining = self.config.horizon - t;
            if remaining > 0 {
                self.fallback = Some(
                    Exp3P::new(self.config.arms, remaining, self.config.delta)?.as_fallback(),
                );
            }
            return Ok(Some(test));
        }
        self.update_probabilities(t);
        Ok(deactivated.then_some(TestId::Deactivate7))
    }

    fn summary(&self) -> PolicySummary {
        let k = self.config.arms;
        PolicySummary {
            name: self.name(),
            switch_round: self.switch_round,
            switch_test: self.switch_test,
            deactivations: (0..k).map(|i| (!self.active[i]).then_some(self.tau[i])).collect(),
            frozen_probs: (0..k).map(|i| self.frozen_prob(i)).collect(),
            exploration_length: None,
            leader: None,
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
