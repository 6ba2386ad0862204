use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use sao_core::bandit::{read_trace, replay_statistics, write_trace, RoundRecord};
use sao_core::concentration::{validate_builtin, write_validation_csv};
use sao_core::harness::{
    rerun_trace, run_monte_carlo, ExperimentConfig, Manifest, MonteCarloReport, RunOptions,
    CONFIG_SCHEMA_VERSION, VERSION,
};

#[derive(Parser)]
#[command(name = "sao", version, about = "Simulate bandit policies against stochastic and adversarial rewards")]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SAO_OUT_DIR", default_value = "sao-out")]
    out: PathBuf,
    /// Worker threads for replicates.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    /// Write one trace CSV per episode under `<out>/traces`.
    #[arg(long, global = true)]
    emit_traces: bool,
    /// Exit with status 3 when mean regret exceeds a policy's envelope.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy in a config and write aggregate CSVs.
    Run { config: PathBuf },
    /// Like `run`, plus a per-policy comparison table.
    Compare { config: PathBuf },
    /// Measure violation rates of the concentration bounds.
    ValidateBounds {
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Re-run an emitted trace and check that it reproduces exactly.
    Replay {
        trace: PathBuf,
        config: PathBuf,
        /// Replicate index; parsed from `r<replicate>_<policy>.csv` by default.
        #[arg(long)]
        replicate: Option<u64>,
        /// Policy label; parsed from the file name by default.
        #[arg(long)]
        policy: Option<String>,
    },
}

/// Failure with a specific exit status.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Envelope(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let config = e
            .chain()
            .any(|c| c.downcast_ref::<sao_core::Error>().is_some_and(|s| s.is_config()));
        if config {
            Failure::Config(e)
        } else {
            Failure::Other(e)
        }
    }
}

fn main() -> ExitCode {
    let version: &'static str =
        Box::leak(format!("{VERSION} (config schema {CONFIG_SCHEMA_VERSION})").into_boxed_str());
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Envelope(msg) => eprintln!("envelope violation: {msg}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Envelope(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => run(cli, config, false),
        Command::Compare { config } => run(cli, config, true),
        Command::ValidateBounds { trials } => validate_bounds(cli, *trials),
        Command::Replay {
            trace,
            config,
            replicate,
            policy,
        } => replay(cli, trace, config, *replicate, policy.as_deref()),
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let mut cfg = ExperimentConfig::from_toml(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Writes `contents` to `path` through a temp file in the same directory.
fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn trace_bytes(arms: usize, trace: &[RoundRecord]) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace(&mut buf, arms, trace)?;
    Ok(buf)
}

fn run(cli: &Cli, path: &Path, compare: bool) -> Result<(), Failure> {
    let cfg = load_config(cli, path)?;
    if compare && cfg.policies.len() < 2 {
        return Err(Failure::Config(anyhow!(
            "compare needs at least two [[policy]] entries in {}",
            path.display()
        )));
    }
    let arms = cfg.num_arms();
    let trace_dir = cli.out.join("traces");
    let sink = |replicate: u64, label: &str, trace: &[RoundRecord]| -> sao_core::Result<()> {
        let file = trace_dir.join(format!("r{replicate}_{}.csv", file_label(label)));
        let bytes = trace_bytes(arms, trace).map_err(|e| sao_core::Error::Io(e.to_string()))?;
        write_atomic(&file, &bytes).map_err(|e| sao_core::Error::Io(format!("{e:#}")))
    };
    let opts = RunOptions {
        threads: cli.parallel,
        trace_sink: cli.emit_traces.then_some(&sink as _),
    };
    let report = run_monte_carlo(&cfg, opts).map_err(|e| Failure::from(anyhow::Error::new(e)))?;

    let mut aggregate = Vec::new();
    report.write_aggregate_csv(&mut aggregate).map_err(anyhow::Error::new)?;
    write_atomic(&cli.out.join("aggregate.csv"), &aggregate)?;
    let mut replicates = Vec::new();
    report.write_replicates_csv(&mut replicates).map_err(anyhow::Error::new)?;
    write_atomic(&cli.out.join("replicates.csv"), &replicates)?;
    let command = if compare { "compare" } else { "run" };
    let manifest = Manifest::new(&cfg, command, cli.parallel);
    write_atomic(&cli.out.join("manifest.toml"), manifest.to_toml().as_bytes())?;

    print_summary(&report);
    if compare {
        let table = comparison_csv(&report)?;
        write_atomic(&cli.out.join("comparison.csv"), &table)?;
    }
    println!("outputs written to {}", cli.out.display());

    check_envelopes(&report, cli.strict)
}

fn check_envelopes(report: &MonteCarloReport, strict: bool) -> Result<(), Failure> {
    let violations = report.envelope_violations();
    if strict && !violations.is_empty() {
        let v = &violations[0];
        return Err(Failure::Envelope(format!(
            "{} at t = {}: mean regret {:.3} > envelope {:.3} ({} violations)",
            v.policy,
            v.t,
            v.mean_regret,
            v.envelope,
            violations.len()
        )));
    }
    Ok(())
}

fn print_summary(report: &MonteCarloReport) {
    println!(
        "{:<16} {:>12} {:>12} {:>12} {:>10} {:>12}",
        "policy", "mean", "median", "p90", "switched", "envelope"
    );
    for p in &report.policies {
        let last = p.checkpoints.last().expect("at least one checkpoint");
        let envelope = if last.envelope.vacuous {
            format!("{:.4e}*", last.envelope.value)
        } else {
            format!("{:.4e}", last.envelope.value)
        };
        println!(
            "{:<16} {:>12.3} {:>12.3} {:>12.3} {:>10.3} {:>12}",
            p.label,
            last.mean,
            last.median,
            last.p90,
            p.switch_frequency(),
            envelope
        );
        let fired = p.fired_test_counts();
        if !fired.is_empty() {
            let parts: Vec<String> = fired.iter().map(|(id, n)| format!("{id}={n}")).collect();
            println!("{:<16} fired: {}", "", parts.join(" "));
        }
    }
    let vacuous = report
        .policies
        .iter()
        .any(|p| p.checkpoints.last().is_some_and(|c| c.envelope.vacuous));
    if vacuous {
        println!("(* envelope exceeds the largest possible regret and is vacuous)");
    }
}

/// Final-round statistics per policy, with paired differences against the
/// first policy over shared replicates.
fn comparison_csv(report: &MonteCarloReport) -> anyhow::Result<Vec<u8>> {
    let base = report.policies[0].final_regrets();
    let mut out = String::from(
        "policy,mean_regret,median,p90,switch_frequency,mean_diff_vs_first,stderr_diff\n",
    );
    println!("{:<16} {:>14} {:>12}", "policy", "diff vs first", "stderr");
    for p in &report.policies {
        let r = p.final_regrets();
        let diffs: Vec<f64> = r.iter().zip(&base).map(|(a, b)| a - b).collect();
        let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = if diffs.len() > 1 {
            diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64
        } else {
            0.0
        };
        let se = (var / diffs.len() as f64).sqrt();
        let last = p.checkpoints.last().expect("at least one checkpoint");
        println!("{:<16} {:>14.3} {:>12.3}", p.label, m, se);
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.label,
            last.mean,
            last.median,
            last.p90,
            p.switch_frequency(),
            m,
            se
        ));
    }
    Ok(out.into_bytes())
}

fn validate_bounds(cli: &Cli, trials: u64) -> Result<(), Failure> {
    let results = validate_builtin(trials, cli.seed.unwrap_or(0))
        .map_err(|e| Failure::Config(anyhow::Error::new(e).context("--trials")))?;
    let mut buf = Vec::new();
    write_validation_csv(&mut buf, &results).map_err(anyhow::Error::new)?;
    let path = cli.out.join("bounds.csv");
    write_atomic(&path, &buf)?;
    let mut failed = 0;
    for r in &results {
        let v = &r.violation;
        let ok = v.within_bound();
        failed += usize::from(!ok);
        println!(
            "{} {:<22} {:<12} {:<44} rate {:.5} <= {:.5} + {:.5}",
            if ok { "PASS" } else { "FAIL" },
            r.bound,
            r.params,
            r.sampler,
            v.rate,
            v.theoretical,
            v.slack()
        );
    }
    println!("wrote {}", path.display());
    if failed > 0 {
        return Err(Failure::Other(anyhow!("{failed} bound(s) exceeded their failure probability")));
    }
    Ok(())
}

fn parse_trace_name(path: &Path) -> Option<(u64, String)> {
    let stem = path.file_stem()?.to_str()?;
    let (rep, label) = stem.strip_prefix('r')?.split_once('_')?;
    Some((rep.parse().ok()?, label.to_string()))
}

fn replay(
    cli: &Cli,
    trace_path: &Path,
    config_path: &Path,
    replicate: Option<u64>,
    policy: Option<&str>,
) -> Result<(), Failure> {
    let cfg = load_config(cli, config_path)?;
    let parsed = parse_trace_name(trace_path);
    let replicate = replicate
        .or(parsed.as_ref().map(|p| p.0))
        .ok_or_else(|| Failure::Config(anyhow!("pass --replicate; it is not in the file name")))?;
    let wanted = policy
        .map(str::to_string)
        .or(parsed.map(|p| p.1))
        .ok_or_else(|| Failure::Config(anyhow!("pass --policy; it is not in the file name")))?;
    let label = cfg
        .policies
        .iter()
        .map(|p| p.label())
        .find(|l| *l == wanted || file_label(l) == wanted)
        .ok_or_else(|| Failure::Config(anyhow!("no policy `{wanted}` in {}", config_path.display())))?;

    let bytes = fs::read(trace_path).with_context(|| format!("reading {}", trace_path.display()))?;
    let (arms, recorded) = read_trace(bytes.as_slice()).map_err(anyhow::Error::new)?;
    if arms != cfg.num_arms() {
        return Err(anyhow!("trace has {arms} arms, config has {}", cfg.num_arms()).into());
    }
    for r in &recorded {
        r.validate()
            .with_context(|| format!("round {}", r.t))?;
    }
    let stats = replay_statistics(arms, &recorded).map_err(anyhow::Error::new)?;

    let fresh = rerun_trace(&cfg, replicate, &label).map_err(|e| Failure::from(anyhow::Error::new(e)))?;
    if let Some(r) = recorded.iter().zip(&fresh).find(|(a, b)| a != b) {
        return Err(anyhow!("trace diverges from a fresh run at round {}", r.0.t).into());
    }
    if recorded.len() != fresh.len() {
        return Err(anyhow!("trace has {} rounds, a fresh run has {}", recorded.len(), fresh.len()).into());
    }
    if trace_bytes(arms, &fresh)? != bytes {
        return Err(anyhow!("trace file differs from a fresh serialization").into());
    }
    let fresh_stats = replay_statistics(arms, &fresh).map_err(anyhow::Error::new)?;
    if stats != fresh_stats {
        return Err(anyhow!("recomputed statistics differ").into());
    }
    println!(
        "trace verified: {} rounds, policy {label}, replicate {replicate}",
        recorded.len()
    );
    for i in 0..arms {
        println!(
            "  arm {i}: plays {:>8}  realized {:.6}  estimated {:.6}",
            stats.samples(i),
            stats.realized_sum(i),
            stats.estimated_sum(i)
        );
    }
    Ok(())
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sao_core::harness::ExperimentConfig;

    fn report() -> MonteCarloReport {
        let cfg = ExperimentConfig::from_toml(
            r#"
horizon = 200
replicates = 2
[environment]
kind = "bernoulli"
means = [0.6, 0.4]
[[policy]]
policy = "exp3"
"#,
        )
        .unwrap();
        run_monte_carlo(&cfg, RunOptions::default()).unwrap()
    }

    #[test]
    fn strict_mode_fails_with_code_3_on_a_violation() {
        let mut report = report();
        assert!(check_envelopes(&report, true).is_ok());
        let last = report.policies[0].checkpoints.last_mut().unwrap();
        last.mean = last.envelope.capped + 1.0;
        let failure = check_envelopes(&report, true).unwrap_err();
        assert!(matches!(failure, Failure::Envelope(_)));
        assert_eq!(failure.code(), 3);
        assert!(check_envelopes(&report, false).is_ok());
    }

    #[test]
    fn config_errors_map_to_code_2() {
        let err = ExperimentConfig::from_toml("horizon = 1").unwrap_err();
        let failure = Failure::from(anyhow::Error::new(err).context("loading"));
        assert_eq!(failure.code(), 2);
        assert_eq!(Failure::from(anyhow!("disk full")).code(), 1);
    }

    #[test]
    fn trace_file_names_round_trip() {
        let name = format!("r12_{}.csv", file_label("sao fast/1"));
        assert_eq!(name, "r12_sao_fast_1.csv");
        let parsed = parse_trace_name(Path::new(&format!("out/traces/{name}")));
        assert_eq!(parsed, Some((12, "sao_fast_1".to_string())));
        assert_eq!(parse_trace_name(Path::new("traces/x12_sao.csv")), None);
    }
}
