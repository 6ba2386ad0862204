//! Per-arm tallies, the importance-weighted estimator, the round record and
//! the two regret accountants.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the sum of a probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Running per-arm tallies observed by a policy.
///
/// `samples[i]` counts plays of arm `i`, `realized[i]` is the reward the
/// algorithm collected from it and `estimated[i]` is the importance-weighted
/// cumulative reward `sum_s g_{i,s} 1{I_s = i} / p_{i,s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats<F> {
    t: u64,
    samples: Vec<u64>,
    realized: Vec<F>,
    estimated: Vec<F>,
}

impl<F: Scalar> ArmStats<F> {
    pub fn new(arms: usize) -> Self {
        ArmStats {
            t: 0,
            samples: vec![0; arms],
            realized: vec![F::zero(); arms],
            estimated: vec![F::zero(); arms],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.samples.len()
    }

    /// Rounds recorded so far.
    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn samples(&self, arm: usize) -> u64 {
        self.samples[arm]
    }

    pub fn realized_sum(&self, arm: usize) -> F {
        self.realized[arm]
    }

    pub fn estimated_sum(&self, arm: usize) -> F {
        self.estimated[arm]
    }

    /// Records one round in which `arm` was drawn with probability `prob`
    /// and paid `reward`.
    pub fn record_round(&mut self, arm: usize, reward: F, prob: F) -> Result<()> {
        let arms = self.num_arms();
        if arm >= arms {
            return Err(Error::InvalidArm { arm, arms });
        }
        // NaN fails both comparisons.
        if !(prob > F::zero() && prob <= F::one()) {
            return Err(Error::InvalidProbability {
                arm,
                prob: prob.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(reward >= F::zero() && reward <= F::one()) {
            return Err(Error::InvalidReward {
                arm,
                reward: reward.to_f64().unwrap_or(f64::NAN),
            });
        }
        self.t += 1;
        self.samples[arm] += 1;
        self.realized[arm] = self.realized[arm] + reward;
        self.estimated[arm] = self.estimated[arm] + reward / prob;
        Ok(())
    }

    /// `G~_i / t`.
    pub fn estimated_average(&self, arm: usize, t: u64) -> Result<F> {
        if t == 0 {
            return Err(Error::UndefinedAverage {
                arm,
                reason: "no rounds elapsed",
            });
        }
        Ok(self.estimated[arm] / F::from_count(t))
    }

    /// `G^_i / T_i`.
    pub fn realized_average(&self, arm: usize) -> Result<F> {
        match self.samples[arm] {
            0 => Err(Error::UndefinedAverage {
                arm,
                reason: "arm never played",
            }),
            plays => Ok(self.realized[arm] / F::from_count(plays)),
        }
    }
}

/// Phase tag attached to every round of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Exploration,
    Exploitation,
    Adversarial,
    /// SAO before any consistency test has fired.
    SaoStochastic,
    /// SAO after handing control to Exp3.P.
    SaoFallback,
    Ucb1,
    Exp3,
    Exp3P,
}

impl Phase {
    pub const ALL: [Phase; 8] = [
        Phase::Exploration,
        Phase::Exploitation,
        Phase::Adversarial,
        Phase::SaoStochastic,
        Phase::SaoFallback,
        Phase::Ucb1,
        Phase::Exp3,
        Phase::Exp3P,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Exploration => "exploration",
            Phase::Exploitation => "exploitation",
            Phase::Adversarial => "adversarial",
            Phase::SaoStochastic => "sao-stochastic",
            Phase::SaoFallback => "sao-exp3p",
            Phase::Ucb1 => "ucb1",
            Phase::Exp3 => "exp3",
            Phase::Exp3P => "exp3p",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Trace(format!("unknown phase `{s}`")))
    }
}

/// Which decision rule fired in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestId {
    /// An arm left the active set.
    Deactivate7,
    /// Estimated and realized averages disagree.
    Consistency8,
    /// Estimated suboptimality of an inactive arm grew too much.
    Consistency9,
    /// An inactive arm no longer looks suboptimal.
    Consistency10,
    /// SimpleSAO left exploration.
    ExplorationExit1,
    /// SimpleSAO gap band violated.
    Cond2,
    /// SimpleSAO estimator agreement violated.
    Cond3,
}

impl TestId {
    pub const ALL: [TestId; 7] = [
        TestId::Deactivate7,
        TestId::Consistency8,
        TestId::Consistency9,
        TestId::Consistency10,
        TestId::ExplorationExit1,
        TestId::Cond2,
        TestId::Cond3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::Deactivate7 => "deactivate-7",
            TestId::Consistency8 => "consistency-8",
            TestId::Consistency9 => "consistency-9",
            TestId::Consistency10 => "consistency-10",
            TestId::ExplorationExit1 => "exploration-exit-1",
            TestId::Cond2 => "cond-2",
            TestId::Cond3 => "cond-3",
        }
    }

    /// Whether this test hands the remaining rounds to Exp3.P.
    pub fn is_switch(self) -> bool {
        !matches!(self, TestId::Deactivate7 | TestId::ExplorationExit1)
    }

    pub fn label(id: Option<TestId>) -> &'static str {
        id.map_or("none", TestId::as_str)
    }

    pub fn parse_label(s: &str) -> Result<Option<TestId>> {
        if s == "none" {
            return Ok(None);
        }
        TestId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .map(Some)
            .ok_or_else(|| Error::Trace(format!("unknown test id `{s}`")))
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One round of play, as seen from outside the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub probs: Vec<f64>,
    pub chosen: usize,
    pub reward: f64,
    pub phase: Phase,
    pub fired_test: Option<TestId>,
}

impl RoundRecord {
    /// Checks the simplex and reward-range invariants.
    pub fn validate(&self) -> Result<()> {
        check_simplex(&self.probs)?;
        if self.chosen >= self.probs.len() {
            return Err(Error::InvalidArm {
                arm: self.chosen,
                arms: self.probs.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(Error::InvalidReward {
                arm: self.chosen,
                reward: self.reward,
            });
        }
        Ok(())
    }
}

pub fn check_simplex(probs: &[f64]) -> Result<()> {
    for (arm, &p) in probs.iter().enumerate() {
        if !(p >= 0.0 && p <= 1.0) {
            return Err(Error::InvalidProbability { arm, prob: p });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::OutOfDomain {
            name: "probability sum",
            value: sum,
            constraint: "within 1e-9 of 1",
        });
    }
    Ok(())
}

/// Rebuilds arm statistics from a trace, in trace order.
pub fn replay_statistics(arms: usize, trace: &[RoundRecord]) -> Result<ArmStats<f64>> {
    let mut stats = ArmStats::new(arms);
    for rec in trace {
        let prob = rec.probs.get(rec.chosen).copied().ok_or(Error::InvalidArm {
            arm: rec.chosen,
            arms: rec.probs.len(),
        })?;
        stats
            .record_round(rec.chosen, rec.reward, prob)
            .map_err(|e| e.at_round(rec.t))?;
    }
    Ok(stats)
}

/// Environment-side accounting for both notions of regret.
///
/// The fixed-arm sums are never shown to a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger<F> {
    rounds: u64,
    benchmark: Vec<F>,
    collected: F,
    pseudo_collected: F,
    means: Option<Vec<F>>,
}

impl<F: Scalar> RegretLedger<F> {
    pub fn new(arms: usize, means: Option<Vec<F>>) -> Self {
        RegretLedger {
            rounds: 0,
            benchmark: vec![F::zero(); arms],
            collected: F::zero(),
            pseudo_collected: F::zero(),
            means,
        }
    }

    /// Adds one round given the full reward vector and the played arm.
    pub fn record(&mut self, rewards: &[F], chosen: usize) {
        debug_assert_eq!(rewards.len(), self.benchmark.len());
        self.rounds += 1;
        for (sum, &g) in self.benchmark.iter_mut().zip(rewards) {
            *sum = *sum + g;
        }
        self.collected = self.collected + rewards[chosen];
        if let Some(mu) = &self.means {
            self.pseudo_collected = self.pseudo_collected + mu[chosen];
        }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn benchmark_sums(&self) -> &[F] {
        &self.benchmark
    }

    pub fn collected(&self) -> F {
        self.collected
    }

    pub fn means(&self) -> Option<&[F]> {
        self.means.as_deref()
    }

    /// Arm with the largest fixed-arm sum, lowest index on ties.
    pub fn best_fixed_arm(&self) -> usize {
        argmax(&self.benchmark)
    }

    /// `max_i G_i - sum_t g_{I_t,t}`; negative when the policy beat every
    /// fixed arm.
    pub fn adversarial_regret(&self) -> F {
        self.benchmark[self.best_fixed_arm()] - self.collected
    }

    /// `n mu* - sum_t mu_{I_t}`.
    pub fn pseudo_regret(&self) -> Result<F> {
        let mu = self
            .means
            .as_ref()
            .ok_or(Error::ModelMismatch("pseudo-regret needs per-arm means"))?;
        let best = mu[argmax(mu)];
        let regret = F::from_count(self.rounds) * best - self.pseudo_collected;
        // Accumulated rounding can leave a tiny negative value.
        Ok(regret.max(F::zero()))
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<F: PartialOrd + Copy>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Formats a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a trace as CSV: `t,phase,chosen,reward,fired_test,p_0..p_{K-1}`.
pub fn write_trace<W: Write>(writer: W, arms: usize, trace: &[RoundRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec![
        "t".to_string(),
        "phase".into(),
        "chosen".into(),
        "reward".into(),
        "fired_test".into(),
    ];
    header.extend((0..arms).map(|i| format!("p_{i}")));
    out.write_record(&header).map_err(csv_err)?;
    for rec in trace {
        let mut row = vec![
            rec.t.to_string(),
            rec.phase.to_string(),
            rec.chosen.to_string(),
            format_f64(rec.reward),
            TestId::label(rec.fired_test).to_string(),
        ];
        row.extend(rec.probs.iter().map(|&p| format_f64(p)));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]; returns the arm count too.
pub fn read_trace<R: Read>(reader: R) -> Result<(usize, Vec<RoundRecord>)> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers().map_err(csv_err)?.clone();
    let fixed = ["t", "phase", "chosen", "reward", "fired_test"];
    if header.len() < fixed.len() + 2 || header.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(Error::Trace("unexpected trace header".into()));
    }
    let arms = header.len() - fixed.len();
    for (i, h) in header.iter().skip(fixed.len()).enumerate() {
        if h != format!("p_{i}") {
            return Err(Error::Trace(format!("unexpected column `{h}`")));
        }
    }
    let mut trace = Vec::new();
    for row in input.records() {
        let row = row.map_err(csv_err)?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::Trace(format!("bad number `{}`", field(i))))
        };
        let int = |i: usize| -> Result<u64> {
            field(i)
                .parse()
                .map_err(|_| Error::Trace(format!("bad integer `{}`", field(i))))
        };
        trace.push(RoundRecord {
            t: int(0)?,
            phase: field(1).parse()?,
            chosen: int(2)? as usize,
            reward: num(3)?,
            fired_test: TestId::parse_label(field(4))?,
            probs: (0..arms).map(|i| num(5 + i)).collect::<Result<_>>()?,
        });
    }
    Ok((arms, trace))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Trace(e.to_string())
}
