use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = r#"
horizon = 400
replicates = 3
seed = 9
[environment]
kind = "bernoulli"
means = [0.7, 0.4, 0.3]
[[policy]]
policy = "sao"
[[policy]]
policy = "exp3"
label = "exp3 baseline"
"#;

fn sao(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sao"))
        .current_dir(dir)
        .env_remove("SAO_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn workspace(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("cfg.toml"), config).unwrap();
    dir
}

#[test]
fn horizon_below_arm_count_is_a_config_error() {
    let dir = workspace(&CONFIG.replace("horizon = 400", "horizon = 2"));
    let out = sao(dir.path(), &["run", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("n >= K >= 2"), "{}", text(&out.stderr));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = workspace(&format!("{CONFIG}\nhorizn = 10\n"));
    let out = sao(dir.path(), &["run", "cfg.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("horizn"), "{}", text(&out.stderr));

    let dir = workspace(&CONFIG.replace("policy = \"sao\"", "policy = \"sao\"\nbeta_mod = \"n4\""));
    assert_eq!(sao(dir.path(), &["run", "cfg.toml"]).status.code(), Some(2));
}

#[test]
fn experiment_knobs_need_experiment_mode() {
    let dir = workspace(&CONFIG.replace("policy = \"sao\"", "policy = \"sao\"\ngap_scale = 0.5"));
    assert_eq!(sao(dir.path(), &["run", "cfg.toml"]).status.code(), Some(2));
}

#[test]
fn run_writes_outputs_and_emitted_traces_replay() {
    let dir = workspace(CONFIG);
    let out = sao(dir.path(), &["--emit-traces", "--parallel", "2", "run", "cfg.toml"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let root = dir.path().join("sao-out");
    for file in ["aggregate.csv", "replicates.csv", "manifest.toml"] {
        assert!(root.join(file).is_file(), "{file}");
    }
    let aggregate = fs::read_to_string(root.join("aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("checkpoint,policy,mean_regret,median,p90,exp3p_start_freq,envelope,capped_envelope"));
    let replicates = fs::read_to_string(root.join("replicates.csv")).unwrap();
    assert_eq!(replicates.lines().count(), 1 + 3 * 2);

    let trace = root.join("traces/r2_exp3_baseline.csv");
    assert!(trace.is_file());
    let out = sao(dir.path(), &["replay", trace.to_str().unwrap(), "cfg.toml"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("trace verified"));

    let out = sao(dir.path(), &["replay", "sao-out/traces/r0_sao.csv", "cfg.toml"]);
    assert!(out.status.success(), "{}", text(&out.stderr));

    // A trace from another replicate does not verify.
    let out = sao(
        dir.path(),
        &["replay", "sao-out/traces/r0_sao.csv", "cfg.toml", "--replicate", "1"],
    );
    assert!(!out.status.success());
}

#[test]
fn tampered_trace_fails_replay() {
    let dir = workspace(CONFIG);
    assert!(sao(dir.path(), &["--emit-traces", "run", "cfg.toml"]).status.success());
    let path = dir.path().join("sao-out/traces/r1_sao.csv");
    let original = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let fields: Vec<&str> = lines[last].split(',').collect();
    let chosen_col = original
        .lines()
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == "chosen")
        .unwrap();
    let mut fields: Vec<String> = fields.into_iter().map(String::from).collect();
    fields[chosen_col] = if fields[chosen_col] == "0" { "1" } else { "0" }.to_string();
    lines[last] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = sao(dir.path(), &["replay", path.to_str().unwrap(), "cfg.toml"]);
    assert!(!out.status.success());
}

#[test]
fn seed_override_changes_results_and_is_recorded() {
    let dir = workspace(CONFIG);
    assert!(sao(dir.path(), &["--out", "a", "run", "cfg.toml"]).status.success());
    assert!(sao(dir.path(), &["--out", "b", "run", "cfg.toml"]).status.success());
    assert!(sao(dir.path(), &["--out", "c", "--seed", "10", "run", "cfg.toml"]).status.success());
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("replicates.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let manifest = fs::read_to_string(dir.path().join("c/manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 10"), "{manifest}");
}

#[test]
fn out_directory_comes_from_the_environment() {
    let dir = workspace(CONFIG);
    let out = Command::new(env!("CARGO_BIN_EXE_sao"))
        .current_dir(dir.path())
        .env("SAO_OUT_DIR", "from-env")
        .args(["run", "cfg.toml"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("from-env/aggregate.csv").is_file());
    assert!(!dir.path().join("sao-out").exists());
}

#[test]
fn compare_writes_paired_differences() {
    let dir = workspace(CONFIG);
    let out = sao(dir.path(), &["compare", "cfg.toml"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let table = fs::read_to_string(dir.path().join("sao-out/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("exp3 baseline"));

    let single = workspace(&CONFIG.replace("[[policy]]\npolicy = \"exp3\"\nlabel = \"exp3 baseline\"\n", ""));
    assert_eq!(sao(single.path(), &["compare", "cfg.toml"]).status.code(), Some(2));
}

#[test]
fn validate_bounds_writes_rates() {
    let dir = TempDir::new().unwrap();
    let out = sao(dir.path(), &["validate-bounds", "--trials", "100000"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sao-out/bounds.csv")).unwrap();
    assert!(csv.starts_with("bound,params,sampler,trials,empirical_rate,theoretical,slack,pass"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
    assert!(!text(&out.stdout).contains("FAIL"));
}

#[test]
fn version_reports_the_schema() {
    let out = sao(Path::new("."), &["--version"]);
    assert!(out.status.success());
    let v = text(&out.stdout);
    assert!(v.contains(env!("CARGO_PKG_VERSION")) && v.contains("config schema 1"), "{v}");
}

#[test]
fn unreadable_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = sao(dir.path(), &["run", "nope.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nope.toml"));
}
