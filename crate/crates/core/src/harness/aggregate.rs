//! Monte Carlo replicates and their summary statistics.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EnvironmentSpec, ExperimentConfig, PolicySpec};
use super::envelope::{exp3p_envelope, theorem_envelope, Envelope, EnvelopeKind};
use super::episode::{
    environment_rng, environment_seed, policy_rng, run_episode, EpisodeOptions, EpisodeOutcome,
};
use crate::bandit::{format_f64, RoundRecord, TestId};
use crate::environments::minimal_gap;
use crate::error::{Error, Result};

/// Receives the trace of every episode as it finishes.
pub type TraceSink<'a> = &'a (dyn Fn(u64, &str, &[RoundRecord]) -> Result<()> + Sync);

#[derive(Default, Clone, Copy)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 or 1 runs replicates serially.
    pub threads: usize,
    pub trace_sink: Option<TraceSink<'a>>,
}

/// Runs replicate `r` of every policy. Environments are rebuilt per policy
/// from the same seed, so stochastic rewards are shared across policies.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    replicate: u64,
    trace_sink: Option<TraceSink<'_>>,
) -> Result<Vec<EpisodeOutcome>> {
    let k = cfg.num_arms();
    let checkpoints = cfg.checkpoints();
    let env_seed = environment_seed(cfg.seed, replicate);
    let inner = || -> Result<Vec<EpisodeOutcome>> {
        let mut out = Vec::with_capacity(cfg.policies.len());
        for (j, spec) in cfg.policies.iter().enumerate() {
            let mut env = cfg.environment.build(cfg.horizon, env_seed)?;
            let mut policy = spec.build(k, cfg.horizon)?;
            let mut env_rng = environment_rng(cfg.seed, replicate);
            let mut pol_rng = policy_rng(cfg.seed, replicate, j);
            let mut outcome = run_episode(
                &mut env,
                policy.as_mut(),
                &mut env_rng,
                &mut pol_rng,
                EpisodeOptions {
                    checkpoints: &checkpoints,
                    keep_trace: trace_sink.is_some(),
                    observer: None,
                },
            )?;
            if let (Some(sink), Some(trace)) = (trace_sink, outcome.trace.take()) {
                sink(replicate, &spec.label(), &trace)?;
            }
            out.push(outcome);
        }
        Ok(out)
    };
    inner().map_err(|e| Error::Replicate {
        replicate,
        source: Box::new(e),
    })
}

/// Regenerates the trace of one episode from its configuration.
pub fn rerun_trace(cfg: &ExperimentConfig, replicate: u64, label: &str) -> Result<Vec<RoundRecord>> {
    let j = cfg
        .policies
        .iter()
        .position(|p| p.label() == label)
        .ok_or_else(|| Error::config("policy", format!("no policy labelled `{label}`")))?;
    let spec = &cfg.policies[j];
    let mut env = cfg
        .environment
        .build(cfg.horizon, environment_seed(cfg.seed, replicate))?;
    let mut policy = spec.build(cfg.num_arms(), cfg.horizon)?;
    let outcome = run_episode(
        &mut env,
        policy.as_mut(),
        &mut environment_rng(cfg.seed, replicate),
        &mut policy_rng(cfg.seed, replicate, j),
        EpisodeOptions {
            keep_trace: true,
            ..Default::default()
        },
    )?;
    Ok(outcome.trace.unwrap_or_default())
}

pub fn run_monte_carlo(cfg: &ExperimentConfig, opts: RunOptions<'_>) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let per_replicate: Vec<Vec<EpisodeOutcome>> = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::config("parallel", e.to_string()))?;
        pool.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| run_replicate(cfg, r, opts.trace_sink))
                .collect::<Result<_>>()
        })?
    } else {
        (0..cfg.replicates)
            .map(|r| run_replicate(cfg, r, opts.trace_sink))
            .collect::<Result<_>>()?
    };
    let mut episodes: Vec<Vec<EpisodeOutcome>> = vec![Vec::new(); cfg.policies.len()];
    for rep in per_replicate {
        for (j, outcome) in rep.into_iter().enumerate() {
            episodes[j].push(outcome);
        }
    }
    let checkpoints = cfg.checkpoints();
    let policies = cfg
        .policies
        .iter()
        .zip(episodes)
        .map(|(spec, eps)| PolicyReport::new(cfg, spec, &checkpoints, eps))
        .collect();
    Ok(MonteCarloReport {
        horizon: cfg.horizon,
        replicates: cfg.replicates,
        checkpoints,
        policies,
    })
}

/// Nearest-rank quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStats {
    pub t: u64,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    /// `(mean, median, p90)` of regret against the best fixed arm, for
    /// stochastic environments where the main columns hold pseudo-regret.
    pub adversarial: Option<(f64, f64, f64)>,
    /// Fraction of replicates in which Exp3.P had taken over by round `t`.
    pub exp3p_start_freq: f64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone)]
pub struct PolicyReport {
    pub label: String,
    pub kind: &'static str,
    pub checkpoints: Vec<CheckpointStats>,
    pub episodes: Vec<EpisodeOutcome>,
}

impl PolicyReport {
    fn new(
        cfg: &ExperimentConfig,
        spec: &PolicySpec,
        checkpoints: &[u64],
        episodes: Vec<EpisodeOutcome>,
    ) -> Self {
        let k = cfg.num_arms();
        let stochastic = cfg.environment.means().is_some();
        let checkpoints = checkpoints
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let regrets: Vec<f64> = episodes.iter().map(|e| e.checkpoint_regret[i]).collect();
                let adversarial = stochastic.then(|| {
                    let r: Vec<f64> =
                        episodes.iter().map(|e| e.checkpoint_adversarial[i]).collect();
                    (mean(&r), quantile(&r, 0.5), quantile(&r, 0.9))
                });
                let started = episodes
                    .iter()
                    .filter(|e| e.summary.switch_round.is_some_and(|s| s < t))
                    .count();
                CheckpointStats {
                    t,
                    mean: mean(&regrets),
                    median: quantile(&regrets, 0.5),
                    p90: quantile(&regrets, 0.9),
                    adversarial,
                    exp3p_start_freq: started as f64 / episodes.len() as f64,
                    envelope: policy_envelope(spec, &cfg.environment, t, cfg.horizon, k),
                }
            })
            .collect();
        PolicyReport {
            label: spec.label(),
            kind: spec.kind(),
            checkpoints,
            episodes,
        }
    }

    pub fn final_regrets(&self) -> Vec<f64> {
        self.episodes.iter().map(EpisodeOutcome::regret).collect()
    }

    pub fn mean_final_regret(&self) -> f64 {
        mean(&self.final_regrets())
    }

    /// Fraction of replicates in which Exp3.P ever took over.
    pub fn switch_frequency(&self) -> f64 {
        let n = self
            .episodes
            .iter()
            .filter(|e| e.summary.switch_round.is_some())
            .count();
        n as f64 / self.episodes.len() as f64
    }

    /// `tau_0` per replicate.
    pub fn switch_rounds(&self) -> Vec<Option<u64>> {
        self.episodes.iter().map(|e| e.summary.switch_round).collect()
    }

    /// Deactivation round of `arm` per replicate (SAO only).
    pub fn deactivation_rounds(&self, arm: usize) -> Vec<Option<u64>> {
        self.episodes
            .iter()
            .map(|e| e.summary.deactivations.get(arm).copied().flatten())
            .collect()
    }

    /// Number of episodes in which each test fired at least once.
    pub fn fired_test_counts(&self) -> BTreeMap<TestId, u64> {
        let mut counts = BTreeMap::new();
        for e in &self.episodes {
            let mut seen: Vec<TestId> = e.firings.iter().map(|f| f.1).collect();
            seen.sort();
            seen.dedup();
            for id in seen {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Reference envelope for a policy at checkpoint `t`. Stochastic
/// environments with a positive gap use the stochastic form capped at
/// `max_gap * t`; everything else uses the adversarial form capped at `t`.
/// Policies without their own confidence parameter use `L = 4 ln n`.
pub fn policy_envelope(
    spec: &PolicySpec,
    env: &EnvironmentSpec,
    t: u64,
    horizon: u64,
    arms: usize,
) -> Envelope {
    if let PolicySpec::Exp3p { delta, .. } = spec {
        return exp3p_envelope(t, arms, *delta);
    }
    let log_beta = spec
        .log_beta(arms, horizon)
        .unwrap_or(4.0 * (horizon as f64).ln());
    let means = env.means();
    let gap = means.as_deref().and_then(minimal_gap);
    match (means, gap) {
        (Some(means), Some(gap)) => {
            let value = theorem_envelope(EnvelopeKind::Stochastic, t, arms, gap, log_beta)
                .expect("positive gap");
            let spread = means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - means.iter().copied().fold(f64::INFINITY, f64::min);
            Envelope::new(value, spread * t as f64)
        }
        _ => {
            let value = theorem_envelope(EnvelopeKind::Adversarial, t, arms, 0.0, log_beta)
                .expect("adversarial form is total");
            Envelope::new(value, t as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub policy: String,
    pub t: u64,
    pub mean_regret: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub horizon: u64,
    pub replicates: u64,
    pub checkpoints: Vec<u64>,
    pub policies: Vec<PolicyReport>,
}

impl MonteCarloReport {
    pub fn policy(&self, label: &str) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.label == label)
    }

    /// Checkpoints where mean regret exceeds the capped envelope.
    pub fn envelope_violations(&self) -> Vec<EnvelopeViolation> {
        self.policies
            .iter()
            .flat_map(|p| {
                p.checkpoints
                    .iter()
                    .filter(|c| c.mean > c.envelope.capped)
                    .map(|c| EnvelopeViolation {
                        policy: p.label.clone(),
                        t: c.t,
                        mean_regret: c.mean,
                        envelope: c.envelope.capped,
                    })
            })
            .collect()
    }

    /// `checkpoint,policy,mean_regret,median,p90,exp3p_start_freq,envelope,capped_envelope`
    pub fn write_aggregate_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "checkpoint",
            "policy",
            "mean_regret",
            "median",
            "p90",
            "exp3p_start_freq",
            "envelope",
            "capped_envelope",
        ])
        .map_err(csv_err)?;
        for (ci, &t) in self.checkpoints.iter().enumerate() {
            for p in &self.policies {
                let c = &p.checkpoints[ci];
                w.write_record([
                    t.to_string(),
                    p.label.clone(),
                    format_f64(c.mean),
                    format_f64(c.median),
                    format_f64(c.p90),
                    format_f64(c.exp3p_start_freq),
                    format_f64(c.envelope.value),
                    format_f64(c.envelope.capped),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per replicate and policy.
    pub fn write_replicates_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "replicate",
            "policy",
            "regret",
            "adversarial_regret",
            "switch_round",
            "switch_test",
            "exploration_length",
        ])
        .map_err(csv_err)?;
        let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in 0..self.replicates as usize {
            for p in &self.policies {
                let e = &p.episodes[r];
                w.write_record([
                    r.to_string(),
                    p.label.clone(),
                    format_f64(e.regret()),
                    format_f64(e.adversarial_regret),
                    opt(e.summary.switch_round),
                    TestId::label(e.summary.switch_test).to_string(),
                    opt(e.summary.exploration_length),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(replicates: u64) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
horizon = 400
replicates = {replicates}
seed = 5
[environment]
kind = "bernoulli"
means = [0.7, 0.4, 0.3]
[[policy]]
policy = "sao"
[[policy]]
policy = "ucb1"
[[policy]]
policy = "exp3p"
"#
        ))
        .unwrap()
    }

    #[test]
    fn quantiles() {
        let v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.9), 5.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(mean(&v), 3.0);
    }

    #[test]
    fn parallel_matches_serial() {
        let c = cfg(6);
        let a = run_monte_carlo(&c, RunOptions::default()).unwrap();
        let b = run_monte_carlo(&c, RunOptions { threads: 3, ..Default::default() }).unwrap();
        for (x, y) in a.policies.iter().zip(&b.policies) {
            assert_eq!(x.episodes, y.episodes);
            assert_eq!(x.checkpoints, y.checkpoints);
        }
    }

    #[test]
    fn replicate_is_independent_of_replicate_count() {
        let small = run_monte_carlo(&cfg(2), RunOptions::default()).unwrap();
        let large = run_monte_carlo(&cfg(5), RunOptions::default()).unwrap();
        for (s, l) in small.policies.iter().zip(&large.policies) {
            assert_eq!(s.episodes[..], l.episodes[..2]);
        }
    }

    #[test]
    fn aggregate_csv_shape() {
        let r = run_monte_carlo(&cfg(2), RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        r.write_aggregate_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "checkpoint,policy,mean_regret,median,p90,exp3p_start_freq,envelope,capped_envelope"
        );
        assert_eq!(lines.len(), 1 + 3 * r.checkpoints.len());
        assert!(lines.last().unwrap().starts_with("400,exp3p,"));
    }

    #[test]
    fn common_rewards_across_policies() {
        // Two identical policies see identical rewards and act identically.
        let c = ExperimentConfig::from_toml(
            r#"
horizon = 200
[environment]
kind = "bernoulli"
means = [0.5, 0.5]
[[policy]]
policy = "ucb1"
label = "a"
[[policy]]
policy = "ucb1"
label = "b"
"#,
        )
        .unwrap();
        let r = run_monte_carlo(&c, RunOptions::default()).unwrap();
        assert_eq!(r.policies[0].episodes, r.policies[1].episodes);
    }
}
