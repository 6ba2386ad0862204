//! One policy against one environment for one horizon.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{Policy, PolicySummary};
use crate::bandit::{RegretLedger, RoundRecord, TestId};
use crate::environments::{Environment, History};
use crate::error::{Error, Result};

// Stream `(replicate << 16) | role` of a ChaCha8 generator seeded with the
// master seed. Roles are nonzero so no stream coincides with the default.
const ROLE_ENV: u64 = 1;
const ROLE_ENV_SEED: u64 = 2;
const ROLE_POLICY: u64 = 3;

fn stream(master: u64, replicate: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((replicate << 16) | role);
    rng
}

/// Reward stream for a replicate. Every policy in the replicate sees the
/// same stochastic draws.
pub fn environment_rng(master: u64, replicate: u64) -> ChaCha8Rng {
    stream(master, replicate, ROLE_ENV)
}

/// Sampling stream for policy `index` in a replicate.
pub fn policy_rng(master: u64, replicate: u64, index: usize) -> ChaCha8Rng {
    stream(master, replicate, ROLE_POLICY + index as u64)
}

/// Seed for per-replicate oblivious reward matrices.
pub fn environment_seed(master: u64, replicate: u64) -> u64 {
    stream(master, replicate, ROLE_ENV_SEED).next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Regret at each checkpoint: pseudo-regret for stochastic environments,
    /// regret against the best fixed arm otherwise.
    pub checkpoint_regret: Vec<f64>,
    /// Regret against the best fixed arm at each checkpoint.
    pub checkpoint_adversarial: Vec<f64>,
    pub adversarial_regret: f64,
    pub pseudo_regret: Option<f64>,
    pub collected: f64,
    pub summary: PolicySummary,
    /// Every test firing as `(round, test)`.
    pub firings: Vec<(u64, TestId)>,
    pub trace: Option<Vec<RoundRecord>>,
}

impl EpisodeOutcome {
    pub fn regret(&self) -> f64 {
        self.pseudo_regret.unwrap_or(self.adversarial_regret)
    }
}

/// Options for [`run_episode`].
#[derive(Default)]
pub struct EpisodeOptions<'a> {
    pub checkpoints: &'a [u64],
    pub keep_trace: bool,
    /// Called after every round with the round record and the policy.
    pub observer: Option<&'a mut dyn FnMut(&RoundRecord, &dyn Policy) -> Result<()>>,
}

/// Runs `policy` against `env` for the policy's horizon.
pub fn run_episode(
    env: &mut Environment,
    policy: &mut dyn Policy,
    env_rng: &mut dyn RngCore,
    policy_rng: &mut dyn RngCore,
    mut opts: EpisodeOptions<'_>,
) -> Result<EpisodeOutcome> {
    let k = env.num_arms();
    if policy.num_arms() != k {
        return Err(Error::ModelMismatch("policy and environment disagree on K"));
    }
    let horizon = policy.horizon();
    let means = env.means();
    let mut ledger = RegretLedger::<f64>::new(k, means.clone());
    let mut history = History::new(k, env.needs_reward_history());
    let track_history = env.needs_history();
    let mut checkpoints = opts.checkpoints.iter().copied().peekable();
    let mut checkpoint_regret = Vec::with_capacity(opts.checkpoints.len());
    let mut checkpoint_adversarial = Vec::with_capacity(opts.checkpoints.len());
    let mut firings = Vec::new();
    let mut trace = opts.keep_trace.then(|| Vec::with_capacity(horizon as usize));

    for t in 1..=horizon {
        let rewards = env
            .draw_round(t, &history, env_rng)
            .map_err(|e| e.at_round(t))?;
        let sel = policy.select(t, policy_rng).map_err(|e| e.at_round(t))?;
        let reward = rewards[sel.arm];
        let fired = policy
            .observe(t, sel.arm, reward)
            .map_err(|e| e.at_round(t))?;
        if let Some(id) = fired {
            firings.push((t, id));
        }
        ledger.record(&rewards, sel.arm);
        if track_history {
            history.push(sel.arm, &rewards);
        }
        if trace.is_some() || opts.observer.is_some() {
            let record = RoundRecord {
                t,
                probs: sel.probs,
                chosen: sel.arm,
                reward,
                phase: sel.phase,
                fired_test: fired,
            };
            if let Some(obs) = opts.observer.as_mut() {
                obs(&record, &*policy).map_err(|e| e.at_round(t))?;
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(record);
            }
        }
        while checkpoints.peek() == Some(&t) {
            checkpoints.next();
            let adversarial = ledger.adversarial_regret();
            checkpoint_adversarial.push(adversarial);
            checkpoint_regret.push(match means {
                Some(_) => ledger.pseudo_regret()?,
                None => adversarial,
            });
        }
    }

    Ok(EpisodeOutcome {
        checkpoint_regret,
        checkpoint_adversarial,
        adversarial_regret: ledger.adversarial_regret(),
        pseudo_regret: means.as_ref().map(|_| ledger.pseudo_regret()).transpose()?,
        collected: ledger.collected(),
        summary: policy.summary(),
        firings,
        trace,
    })
}
