//! Reward generation: stochastic arms, oblivious reward sequences and
//! adaptive adversaries, including probes aimed at SAO's consistency tests.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bandit::argmax;
use crate::error::{Error, Result};

/// Reward distribution of one arm; support is always inside `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArmDistribution {
    Bernoulli { mean: f64 },
    Discrete { support: Vec<f64>, weights: Vec<f64> },
}

impl ArmDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            ArmDistribution::Bernoulli { mean } => *mean,
            ArmDistribution::Discrete { support, weights } => {
                support.iter().zip(weights).map(|(x, w)| x * w).sum()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ArmDistribution::Bernoulli { mean } => {
                if !(0.0..=1.0).contains(mean) {
                    return Err(Error::config("mean", format!("{mean} outside [0, 1]")));
                }
            }
            ArmDistribution::Discrete { support, weights } => {
                if support.is_empty() || support.len() != weights.len() {
                    return Err(Error::config(
                        "support",
                        "support and weights must be non-empty and of equal length",
                    ));
                }
                if let Some(x) = support.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                    return Err(Error::config("support", format!("{x} outside [0, 1]")));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::config("weights", "weights must be non-negative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config("weights", format!("weights sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Inverse-CDF sample from a uniform `u` in `[0,1)`.
    pub fn sample_with(&self, u: f64) -> f64 {
        match self {
            ArmDistribution::Bernoulli { mean } => bernoulli(u, *mean),
            ArmDistribution::Discrete { support, weights } => {
                let mut acc = 0.0;
                for (x, w) in support.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *x;
                    }
                }
                // Rounding left u above the last cumulative weight.
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
                support[last]
            }
        }
    }
}

fn bernoulli(u: f64, mean: f64) -> f64 {
    if u < mean {
        1.0
    } else {
        0.0
    }
}

/// Independent arms; each round draws one uniform per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticEnvironment {
    arms: Vec<ArmDistribution>,
}

impl StochasticEnvironment {
    pub fn new(arms: Vec<ArmDistribution>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::config("arms", "need at least two arms"));
        }
        for arm in &arms {
            arm.validate()?;
        }
        Ok(StochasticEnvironment { arms })
    }

    pub fn bernoulli(means: &[f64]) -> Result<Self> {
        Self::new(
            means
                .iter()
                .map(|&mean| ArmDistribution::Bernoulli { mean })
                .collect(),
        )
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(ArmDistribution::mean).collect()
    }

    /// Smallest positive gap `mu* - mu_i`; `None` when all means coincide.
    pub fn gap(&self) -> Option<f64> {
        minimal_gap(&self.means())
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.arms.iter().map(|arm| arm.sample_with(rng.gen())).collect()
    }
}

pub fn minimal_gap(means: &[f64]) -> Option<f64> {
    let best = means[argmax(means)];
    means
        .iter()
        .map(|m| best - m)
        .filter(|d| *d > 0.0)
        .min_by(f64::total_cmp)
}

/// How an oblivious adversary fills its reward matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ObliviousGenerator {
    /// `g_{i,t} = c_i` every round.
    Constant(Vec<f64>),
    /// `g_{i,t}` Bernoulli(`means[i]`) from a hash of `(seed, t, i)`.
    Bernoulli(Vec<f64>),
    /// Explicit matrix, one row per round.
    Matrix(Vec<Vec<f64>>),
}

/// Reward matrix that is a pure function of `(seed, t, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousAdversary {
    seed: u64,
    generator: ObliviousGenerator,
}

impl ObliviousAdversary {
    pub fn new(seed: u64, generator: ObliviousGenerator) -> Result<Self> {
        let arms = match &generator {
            ObliviousGenerator::Constant(v) | ObliviousGenerator::Bernoulli(v) => {
                check_unit("values", v)?;
                v.len()
            }
            ObliviousGenerator::Matrix(rows) => {
                let k = rows.first().map_or(0, Vec::len);
                for row in rows {
                    if row.len() != k {
                        return Err(Error::config("matrix", "rows differ in length"));
                    }
                    check_unit("matrix", row)?;
                }
                k
            }
        };
        if arms < 2 {
            return Err(Error::config("arms", "need at least two arms"));
        }
        Ok(ObliviousAdversary { seed, generator })
    }

    pub fn num_arms(&self) -> usize {
        match &self.generator {
            ObliviousGenerator::Constant(v) | ObliviousGenerator::Bernoulli(v) => v.len(),
            ObliviousGenerator::Matrix(rows) => rows[0].len(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `g_{i,t}` for `t >= 1`.
    pub fn reward(&self, t: u64, arm: usize) -> Result<f64> {
        match &self.generator {
            ObliviousGenerator::Constant(v) => Ok(v[arm]),
            ObliviousGenerator::Bernoulli(means) => {
                Ok(bernoulli(hash_uniform(self.seed, t, arm as u64), means[arm]))
            }
            ObliviousGenerator::Matrix(rows) => rows
                .get((t - 1) as usize)
                .map(|row| row[arm])
                .ok_or_else(|| Error::config("matrix", format!("no row for round {t}"))),
        }
    }

    fn draw(&self, t: u64) -> Result<Vec<f64>> {
        (0..self.num_arms()).map(|i| self.reward(t, i)).collect()
    }
}

fn check_unit(key: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        Some(x) => Err(Error::config(key, format!("{x} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in `[0,1)` determined by `(seed, t, i)` alone.
fn hash_uniform(seed: u64, t: u64, i: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ t) ^ i);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// What an adaptive adversary may see: plays and (optionally) reward
/// vectors of rounds `1..t-1`.
#[derive(Debug, Clone, Default)]
pub struct History {
    plays: Vec<usize>,
    counts: Vec<u64>,
    rewards: Option<Vec<Vec<f64>>>,
}

impl History {
    pub fn new(arms: usize, keep_rewards: bool) -> Self {
        History {
            plays: Vec::new(),
            counts: vec![0; arms],
            rewards: keep_rewards.then(Vec::new),
        }
    }

    pub fn push(&mut self, chosen: usize, rewards: &[f64]) {
        self.plays.push(chosen);
        self.counts[chosen] += 1;
        if let Some(r) = &mut self.rewards {
            r.push(rewards.to_vec());
        }
    }

    pub fn len(&self) -> usize {
        self.plays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plays.is_empty()
    }

    pub fn plays(&self) -> &[usize] {
        &self.plays
    }

    /// Plays per arm over the whole history.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rewards(&self) -> Option<&[Vec<f64>]> {
        self.rewards.as_deref()
    }
}

/// Strategy of an adaptive adversary.
///
/// Called once per round before the policy's draw is revealed, so the output
/// for round `t` can only depend on the history through `t - 1`.
pub trait AdaptiveStrategy: Send + fmt::Debug {
    fn num_arms(&self) -> usize;

    fn rewards(&mut self, t: u64, history: &History, rng: &mut dyn RngCore) -> Vec<f64>;

    fn needs_reward_history(&self) -> bool {
        false
    }
}

#[derive(Debug)]
pub struct AdaptiveAdversary {
    strategy: Box<dyn AdaptiveStrategy>,
}

impl AdaptiveAdversary {
    pub fn new(strategy: Box<dyn AdaptiveStrategy>) -> Self {
        AdaptiveAdversary { strategy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    StochasticThenFlip,
    GapInflater,
    GapCollapser,
    EstimatorSkewer,
}

impl ProbeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stochastic-then-flip" => Ok(ProbeKind::StochasticThenFlip),
            "gap-inflater" => Ok(ProbeKind::GapInflater),
            "gap-collapser" => Ok(ProbeKind::GapCollapser),
            "estimator-skewer" => Ok(ProbeKind::EstimatorSkewer),
            other => Err(Error::config("probe", format!("unknown probe adversary `{other}`"))),
        }
    }
}

/// Parameters shared by the probe adversaries.
///
/// Every probe plays Bernoulli arms with `means` up to round `switch_round`
/// and then changes the means:
///
/// * `stochastic-then-flip`: means become `flipped` (default: `means`
///   reversed).
/// * `gap-inflater`: the arm played most so far moves towards mean 1 and
///   every other arm towards 0, by fraction `amount`.
/// * `gap-collapser`: the most-played arm's mean drops by `amount` times its
///   lead over the runner-up.
/// * `estimator-skewer`: every arm moves towards mean 1 by fraction `amount`,
///   so a rarely sampled arm's importance-weighted average outruns its
///   per-play average.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    pub means: Vec<f64>,
    pub switch_round: u64,
    pub amount: f64,
    pub flipped: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ProbeAdversary {
    kind: ProbeKind,
    params: ProbeParams,
    late_means: Option<Vec<f64>>,
}

impl ProbeAdversary {
    pub fn new(kind: ProbeKind, params: ProbeParams) -> Result<Self> {
        if params.means.len() < 2 {
            return Err(Error::config("means", "need at least two arms"));
        }
        check_unit("means", &params.means)?;
        if !(params.amount >= 0.0) {
            return Err(Error::config("amount", "must be non-negative"));
        }
        if let Some(f) = &params.flipped {
            if f.len() != params.means.len() {
                return Err(Error::config("flipped", "length differs from means"));
            }
            check_unit("flipped", f)?;
        }
        match kind {
            ProbeKind::GapInflater | ProbeKind::EstimatorSkewer if params.amount > 1.0 => {
                return Err(Error::config("amount", "must lie in [0, 1] for this probe"));
            }
            ProbeKind::GapCollapser => {
                // The most-played arm is unknown up front; whichever arm
                // leads must stay a valid mean after the drop.
                let ok = (0..params.means.len())
                    .all(|i| collapsed(&params.means, i, params.amount)[i] >= 0.0);
                if !ok {
                    return Err(Error::config("amount", "collapse drives a mean below 0"));
                }
            }
            _ => {}
        }
        Ok(ProbeAdversary {
            kind,
            params,
            late_means: None,
        })
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    fn late_means(&self, history: &History) -> Vec<f64> {
        let base = &self.params.means;
        let a = self.params.amount;
        let leader = argmax(history.counts());
        match self.kind {
            ProbeKind::StochasticThenFlip => self
                .params
                .flipped
                .clone()
                .unwrap_or_else(|| base.iter().rev().copied().collect()),
            ProbeKind::GapInflater => base
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let target = if i == leader { 1.0 } else { 0.0 };
                    m + a * (target - m)
                })
                .collect(),
            ProbeKind::GapCollapser => collapsed(base, leader, a),
            ProbeKind::EstimatorSkewer => base.iter().map(|&m| m + a * (1.0 - m)).collect(),
        }
    }
}

/// `means` with arm `leader` lowered by `amount` times its lead over the
/// runner-up.
fn collapsed(means: &[f64], leader: usize, amount: f64) -> Vec<f64> {
    let runner_up = means
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != leader)
        .map(|(_, &m)| m)
        .fold(f64::NEG_INFINITY, f64::max);
    let lead = (means[leader] - runner_up).max(0.0);
    let mut m = means.to_vec();
    m[leader] -= amount * lead;
    m
}

impl AdaptiveStrategy for ProbeAdversary {
    fn num_arms(&self) -> usize {
        self.params.means.len()
    }

    fn rewards(&mut self, t: u64, history: &History, rng: &mut dyn RngCore) -> Vec<f64> {
        if t > self.params.switch_round && self.late_means.is_none() {
            self.late_means = Some(self.late_means(history));
        }
        let means = match &self.late_means {
            Some(m) if t > self.params.switch_round => m,
            _ => &self.params.means,
        };
        means.iter().map(|&m| bernoulli(rng.gen(), m)).collect()
    }
}

/// Per-episode reward source.
#[derive(Debug)]
pub enum Environment {
    Stochastic(StochasticEnvironment),
    Oblivious(ObliviousAdversary),
    Adaptive(AdaptiveAdversary),
}

impl Environment {
    pub fn num_arms(&self) -> usize {
        match self {
            Environment::Stochastic(e) => e.num_arms(),
            Environment::Oblivious(e) => e.num_arms(),
            Environment::Adaptive(e) => e.strategy.num_arms(),
        }
    }

    /// Per-arm means, available only for stochastic environments.
    pub fn means(&self) -> Option<Vec<f64>> {
        match self {
            Environment::Stochastic(e) => Some(e.means()),
            _ => None,
        }
    }

    pub fn needs_history(&self) -> bool {
        matches!(self, Environment::Adaptive(_))
    }

    pub fn needs_reward_history(&self) -> bool {
        match self {
            Environment::Adaptive(e) => e.strategy.needs_reward_history(),
            _ => false,
        }
    }

    /// Full reward vector for round `t`, chosen before the round's play.
    pub fn draw_round(
        &mut self,
        t: u64,
        history: &History,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        if t == 0 {
            return Err(Error::OutOfDomain {
                name: "t",
                value: 0.0,
                constraint: "t >= 1",
            });
        }
        let k = self.num_arms();
        let g = match self {
            Environment::Stochastic(e) => e.draw(rng),
            Environment::Oblivious(e) => e.draw(t)?,
            Environment::Adaptive(e) => e.strategy.rewards(t, history, rng),
        };
        if g.len() != k {
            return Err(Error::ModelMismatch("adversary returned wrong number of rewards"));
        }
        if let Some((arm, &reward)) = g.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidReward { arm, reward });
        }
        Ok(g)
    }
}
