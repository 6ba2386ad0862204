//! Declarative experiment description, parsed from TOML with strict key
//! checking.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{
    ActiveSetMode, BetaMode, Exp3, Exp3P, Policy, Sao, SaoConfig, SimpleSao, SimpleSaoConfig, Ucb1,
};
use crate::environments::{
    AdaptiveAdversary, ArmDistribution, Environment, ObliviousAdversary, ObliviousGenerator,
    ProbeAdversary, ProbeKind, ProbeParams, StochasticEnvironment,
};
use crate::error::{Error, Result};

/// Which constants an experiment runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsMode {
    /// Constants as stated by the regret theorems; experiment-only knobs are
    /// rejected.
    #[default]
    Faithful,
    /// Shrunk constants so that tests can fire at desk-scale horizons.
    Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: u64,
    #[serde(default = "one")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ConstantsMode,
    /// Rounds at which regret is recorded; defaults to `ceil(n / 2^k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    pub environment: EnvironmentSpec,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicySpec>,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// The matrix seed is drawn from each replicate's environment stream.
    #[default]
    PerReplicate,
    /// Every replicate sees the matrix generated from `env_seed`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Bernoulli {
        means: Vec<f64>,
    },
    Discrete {
        arms: Vec<DiscreteArm>,
    },
    Oblivious {
        generator: ObliviousKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        seed_policy: SeedPolicy,
        #[serde(default)]
        env_seed: u64,
    },
    Probe {
        probe: ProbeKind,
        means: Vec<f64>,
        /// Last round of the initial stochastic stretch, as a fraction of
        /// the horizon.
        #[serde(default = "half")]
        switch_fraction: f64,
        #[serde(default = "unit")]
        amount: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flipped: Option<Vec<f64>>,
    },
}

fn half() -> f64 {
    0.5
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteArm {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObliviousKind {
    Constant,
    Bernoulli,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaModeKey {
    N4,
    HighProb,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Sao {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default = "default_beta_mode")]
        beta_mode: BetaModeKey,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "unit")]
        gap_scale: f64,
        #[serde(default)]
        active_set: ActiveSetMode,
    },
    SimpleSao {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default = "default_ccrn_multiplier")]
        ccrn_multiplier: f64,
        #[serde(default = "default_floor_multiplier")]
        exploration_floor_multiplier: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Ucb1 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Exp3 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Exp3p {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

fn default_beta_mode() -> BetaModeKey {
    BetaModeKey::N4
}

fn default_delta() -> f64 {
    0.05
}

fn default_ccrn_multiplier() -> f64 {
    SimpleSaoConfig::FAITHFUL_CCRN_MULTIPLIER
}

fn default_floor_multiplier() -> f64 {
    SimpleSaoConfig::DEFAULT_FLOOR_MULTIPLIER
}

impl PolicySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicySpec::Sao { .. } => "sao",
            PolicySpec::SimpleSao { .. } => "simple-sao",
            PolicySpec::Ucb1 { .. } => "ucb1",
            PolicySpec::Exp3 { .. } => "exp3",
            PolicySpec::Exp3p { .. } => "exp3p",
        }
    }

    /// Display name: the label if given, else the policy kind.
    pub fn label(&self) -> String {
        let label = match self {
            PolicySpec::Sao { label, .. }
            | PolicySpec::SimpleSao { label, .. }
            | PolicySpec::Ucb1 { label }
            | PolicySpec::Exp3 { label }
            | PolicySpec::Exp3p { label, .. } => label,
        };
        label.clone().unwrap_or_else(|| self.kind().to_string())
    }

    fn sao_config(&self, arms: usize, horizon: u64) -> Option<Result<SaoConfig>> {
        let PolicySpec::Sao {
            beta_mode,
            beta,
            delta,
            gap_scale,
            active_set,
            ..
        } = self
        else {
            return None;
        };
        let mode = match (beta_mode, beta) {
            (BetaModeKey::N4, None) => BetaMode::N4,
            (BetaModeKey::HighProb, None) => BetaMode::HighProb,
            (BetaModeKey::Explicit, Some(b)) => BetaMode::Explicit(*b),
            (BetaModeKey::Explicit, None) => {
                return Some(Err(Error::config("policy.beta", "beta_mode = explicit needs beta")))
            }
            (_, Some(_)) => {
                return Some(Err(Error::config(
                    "policy.beta",
                    "beta is only used with beta_mode = explicit",
                )))
            }
        };
        let cfg = SaoConfig::new(arms, horizon)
            .beta_mode(mode)
            .delta(*delta)
            .gap_scale(*gap_scale)
            .active_set_mode(*active_set);
        Some(cfg.validate().map(|()| cfg))
    }

    /// `log(beta)` for SAO policies.
    pub fn log_beta(&self, arms: usize, horizon: u64) -> Option<f64> {
        self.sao_config(arms, horizon)
            .and_then(Result::ok)
            .map(|c| c.log_beta())
    }

    pub fn build(&self, arms: usize, horizon: u64) -> Result<Box<dyn Policy>> {
        if let Some(cfg) = self.sao_config(arms, horizon) {
            return Ok(Box::new(Sao::new(cfg?)?));
        }
        Ok(match self {
            PolicySpec::SimpleSao {
                ccrn_multiplier,
                exploration_floor_multiplier,
                delta,
                ..
            } => {
                if arms != 2 {
                    return Err(Error::config("policy", "simple-sao needs exactly K = 2 arms"));
                }
                let mut cfg = SimpleSaoConfig::with_multipliers(
                    horizon,
                    *ccrn_multiplier,
                    *exploration_floor_multiplier,
                );
                cfg.delta = *delta;
                Box::new(SimpleSao::new(cfg)?)
            }
            PolicySpec::Ucb1 { .. } => Box::new(Ucb1::new(arms, horizon)?),
            PolicySpec::Exp3 { .. } => Box::new(Exp3::new(arms, horizon)?),
            PolicySpec::Exp3p { delta, .. } => Box::new(Exp3P::new(arms, horizon, *delta)?),
            PolicySpec::Sao { .. } => unreachable!("handled above"),
        })
    }

    fn uses_experiment_constants(&self) -> bool {
        match self {
            PolicySpec::Sao {
                beta_mode,
                gap_scale,
                ..
            } => *beta_mode == BetaModeKey::Explicit || *gap_scale != 1.0,
            PolicySpec::SimpleSao {
                ccrn_multiplier, ..
            } => *ccrn_multiplier != SimpleSaoConfig::FAITHFUL_CCRN_MULTIPLIER,
            _ => false,
        }
    }
}

impl EnvironmentSpec {
    pub fn num_arms(&self) -> usize {
        match self {
            EnvironmentSpec::Bernoulli { means } | EnvironmentSpec::Probe { means, .. } => means.len(),
            EnvironmentSpec::Discrete { arms } => arms.len(),
            EnvironmentSpec::Oblivious {
                values, matrix, ..
            } => values
                .as_ref()
                .map(Vec::len)
                .or_else(|| matrix.as_ref().and_then(|m| m.first().map(Vec::len)))
                .unwrap_or(0),
        }
    }

    /// Means of a stochastic environment.
    pub fn means(&self) -> Option<Vec<f64>> {
        match self {
            EnvironmentSpec::Bernoulli { means } => Some(means.clone()),
            EnvironmentSpec::Discrete { arms } => Some(
                arms.iter()
                    .map(|a| a.distribution().mean())
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Builds the per-episode environment. `env_seed` seeds oblivious
    /// matrices under the per-replicate seed policy.
    pub fn build(&self, horizon: u64, env_seed: u64) -> Result<Environment> {
        Ok(match self {
            EnvironmentSpec::Bernoulli { means } => {
                Environment::Stochastic(StochasticEnvironment::bernoulli(means)?)
            }
            EnvironmentSpec::Discrete { arms } => Environment::Stochastic(StochasticEnvironment::new(
                arms.iter().map(DiscreteArm::distribution).collect(),
            )?),
            EnvironmentSpec::Oblivious {
                generator,
                values,
                matrix,
                seed_policy,
                env_seed: fixed_seed,
            } => {
                let seed = match seed_policy {
                    SeedPolicy::PerReplicate => env_seed,
                    SeedPolicy::Fixed => *fixed_seed,
                };
                let values = || {
                    values
                        .clone()
                        .ok_or_else(|| Error::config("environment.values", "required for this generator"))
                };
                let generator = match generator {
                    ObliviousKind::Constant => ObliviousGenerator::Constant(values()?),
                    ObliviousKind::Bernoulli => ObliviousGenerator::Bernoulli(values()?),
                    ObliviousKind::Matrix => {
                        let m = matrix.clone().ok_or_else(|| {
                            Error::config("environment.matrix", "required for the matrix generator")
                        })?;
                        if (m.len() as u64) < horizon {
                            return Err(Error::config(
                                "environment.matrix",
                                format!("{} rows for a horizon of {horizon}", m.len()),
                            ));
                        }
                        ObliviousGenerator::Matrix(m)
                    }
                };
                Environment::Oblivious(ObliviousAdversary::new(seed, generator)?)
            }
            EnvironmentSpec::Probe {
                probe,
                means,
                switch_fraction,
                amount,
                flipped,
            } => {
                if !(0.0..=1.0).contains(switch_fraction) {
                    return Err(Error::config("environment.switch_fraction", "must lie in [0, 1]"));
                }
                let params = ProbeParams {
                    means: means.clone(),
                    switch_round: (switch_fraction * horizon as f64).round() as u64,
                    amount: *amount,
                    flipped: flipped.clone(),
                };
                Environment::Adaptive(AdaptiveAdversary::new(Box::new(ProbeAdversary::new(
                    *probe, params,
                )?)))
            }
        })
    }
}

impl DiscreteArm {
    fn distribution(&self) -> ArmDistribution {
        ArmDistribution::Discrete {
            support: self.support.clone(),
            weights: self.weights.clone(),
        }
    }
}

/// `{ceil(n / 2^k)}` for `k = 0, 1, ...` down to 1, ascending.
pub fn geometric_checkpoints(horizon: u64) -> Vec<u64> {
    let mut points = Vec::new();
    let mut k = 0;
    loop {
        let c = horizon.div_ceil(1u64 << k);
        if points.last() != Some(&c) {
            points.push(c);
        }
        if c <= 1 || k >= 63 {
            break;
        }
        k += 1;
    }
    points.reverse();
    points
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn num_arms(&self) -> usize {
        self.environment.num_arms()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_arms();
        if k < 2 || self.horizon < k as u64 {
            return Err(Error::config(
                "horizon",
                format!("need n >= K >= 2 (n = {}, K = {k})", self.horizon),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "need at least one replicate"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policy", "at least one [[policy]] is required"));
        }
        if let Some(points) = &self.checkpoints {
            if points.is_empty() || points[0] == 0 || *points.last().unwrap() > self.horizon {
                return Err(Error::config("checkpoints", "must lie in [1, n]"));
            }
            if points.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("checkpoints", "must be strictly increasing"));
            }
        }
        // Surfaces environment errors before any computation.
        self.environment.build(self.horizon, 0)?;
        let mut labels = std::collections::BTreeSet::new();
        for p in &self.policies {
            p.build(k, self.horizon)?;
            if self.mode == ConstantsMode::Faithful && p.uses_experiment_constants() {
                return Err(Error::config(
                    "mode",
                    format!("policy `{}` sets experiment-only constants; use mode = \"experiment\"", p.label()),
                ));
            }
            if !labels.insert(p.label()) {
                return Err(Error::config("policy.label", format!("duplicate policy `{}`", p.label())));
            }
        }
        Ok(())
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| geometric_checkpoints(self.horizon))
    }

    /// Same experiment with every default spelled out.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        c.checkpoints = Some(self.checkpoints());
        c
    }

    /// SHA-256 of the normalized TOML, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.normalized().to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
horizon = 1000
replicates = 4
seed = 9

[environment]
kind = "bernoulli"
means = [0.6, 0.4]

[[policy]]
policy = "sao"
beta_mode = "high-prob"
delta = 0.05

[[policy]]
policy = "exp3"
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(cfg.policies.len(), 2);
        assert_eq!(cfg.policies[0].label(), "sao");
        assert_eq!(cfg.mode, ConstantsMode::Faithful);
        let lb = cfg.policies[0].log_beta(2, 1000).unwrap();
        assert!((lb - (10.0 * 2.0 * 1e9 / 0.05f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = BASIC.replace("delta = 0.05", "dleta = 0.05");
        let err = ExperimentConfig::from_toml(&typo).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("dleta"), "{err}");

        let top = format!("horizn = 3\n{BASIC}");
        assert!(ExperimentConfig::from_toml(&top).is_err());

        let env = BASIC.replace("means = [0.6, 0.4]", "means = [0.6, 0.4]\nmu = 1");
        assert!(ExperimentConfig::from_toml(&env).is_err());
    }

    #[test]
    fn horizon_below_arm_count_is_an_error() {
        let bad = BASIC.replace("horizon = 1000", "horizon = 1");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("n >= K >= 2"), "{err}");
    }

    #[test]
    fn faithful_mode_rejects_experiment_knobs() {
        let exp = BASIC.replace("beta_mode = \"high-prob\"", "beta_mode = \"explicit\"\nbeta = 20.0");
        assert!(ExperimentConfig::from_toml(&exp).is_err());
        let ok = format!("mode = \"experiment\"\n{exp}");
        assert!(ExperimentConfig::from_toml(&ok).is_ok());
    }

    #[test]
    fn simple_sao_needs_two_arms() {
        let cfg = r#"
horizon = 100
[environment]
kind = "bernoulli"
means = [0.6, 0.4, 0.2]
[[policy]]
policy = "simple-sao"
"#;
        assert!(ExperimentConfig::from_toml(cfg).is_err());
    }

    #[test]
    fn geometric_grid() {
        assert_eq!(geometric_checkpoints(10), vec![1, 2, 3, 5, 10]);
        assert_eq!(geometric_checkpoints(1), vec![1]);
        let g = geometric_checkpoints(50_000);
        assert_eq!(*g.last().unwrap(), 50_000);
        assert_eq!(g[0], 1);
    }

    #[test]
    fn normalized_config_round_trips() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap().normalized();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.normalized(), cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn environment_kinds_parse() {
        let probe = r#"
horizon = 100
mode = "experiment"
[environment]
kind = "probe"
probe = "gap-collapser"
means = [0.7, 0.5]
amount = 1.5
[[policy]]
policy = "sao"
beta_mode = "explicit"
beta = 12.0
gap_scale = 0.3
"#;
        ExperimentConfig::from_toml(probe).unwrap();
        let oblivious = r#"
horizon = 3
[environment]
kind = "oblivious"
generator = "matrix"
matrix = [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]
[[policy]]
policy = "ucb1"
"#;
        ExperimentConfig::from_toml(oblivious).unwrap();
        let short = oblivious.replace("horizon = 3", "horizon = 4");
        assert!(ExperimentConfig::from_toml(&short).is_err());
        let discrete = r#"
horizon = 10
[environment]
kind = "discrete"
[[environment.arms]]
support = [0.0, 1.0]
weights = [0.5, 0.5]
[[environment.arms]]
support = [0.2]
weights = [1.0]
[[policy]]
policy = "exp3p"
"#;
        let d = ExperimentConfig::from_toml(discrete).unwrap();
        assert_eq!(d.environment.means(), Some(vec![0.5, 0.2]));
    }
}
