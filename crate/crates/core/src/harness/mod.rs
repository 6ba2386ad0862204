//! Experiment configuration, seeded episodes and Monte Carlo aggregation.

mod aggregate;
mod config;
mod envelope;
mod episode;
mod manifest;

pub use aggregate::{
    mean, policy_envelope, quantile, rerun_trace, run_monte_carlo, run_replicate, CheckpointStats,
    EnvelopeViolation, MonteCarloReport, PolicyReport, RunOptions, TraceSink,
};
pub use config::{
    geometric_checkpoints, BetaModeKey, ConstantsMode, DiscreteArm, EnvironmentSpec,
    ExperimentConfig, ObliviousKind, PolicySpec, SeedPolicy,
};
pub use envelope::{
    adversarial_envelope, exp3p_envelope, stochastic_envelope, theorem_envelope, Envelope,
    EnvelopeKind,
};
pub use episode::{
    environment_rng, environment_seed, policy_rng, run_episode, EpisodeOptions, EpisodeOutcome,
};
pub use manifest::{Manifest, CONFIG_SCHEMA_VERSION, VERSION};
