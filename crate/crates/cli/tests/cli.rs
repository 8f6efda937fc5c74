use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use spectrolab_cli::config::{ConfigError, ExperimentConfig};
use spectrolab_cli::report::{emit_report, Report};
use spectrolab_cli::runner::{build_report, run_experiment, RunError, RunRecord, RECORD_FILE};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(format!("{name}.toml"))).unwrap()
}

const SMALL_SPECINEQ: &str = r#"
experiment = "specineq"
seed = 4

[domain]
dim = 1
extent = 6.283185307179586
resolution = 64

[coefficients]
type = "constant"
kappa = 1.0

[set]
type = "interval"
start = 0.0
length = 3.141592653589793

[parameters]
mu = [1.0, 2.0, 3.0, 4.0, 5.0]
"#;

#[test]
fn shipped_configs_round_trip() {
    let mut count = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap();
            let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(c, again, "{}", path.display());
            assert_eq!(c.hash(), again.hash());
            count += 1;
        }
    }
    assert_eq!(count, 9);
}

#[test]
fn missing_set_block_names_the_field() {
    let text = SMALL_SPECINEQ.replace("[set]\ntype = \"interval\"\nstart = 0.0\nlength = 3.141592653589793\n", "");
    match ExperimentConfig::from_toml(&text) {
        Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "set"),
        other => panic!("unexpected {other:?}"),
    }
    let text = SMALL_SPECINEQ.replace("mu = [1.0, 2.0, 3.0, 4.0, 5.0]", "mu = [1.0, 2.0]");
    match ExperimentConfig::from_toml(&text) {
        Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "parameters.mu"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unknown_keys_and_missing_seed_are_rejected() {
    let text = SMALL_SPECINEQ.replace("[parameters]", "[parameters]\nbogus = 1");
    assert!(matches!(ExperimentConfig::from_toml(&text), Err(ConfigError::Parse(_))));
    let text = SMALL_SPECINEQ.replace("seed = 4\n", "");
    assert!(matches!(ExperimentConfig::from_toml(&text), Err(ConfigError::Parse(_))));
}

#[test]
fn specineq_emits_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig::from_toml(SMALL_SPECINEQ).unwrap();
    let record = run_experiment(&c, dir.path(), false).unwrap();
    for f in ["constants.csv", "fit.csv", "constants.svg", "summary.txt", "config.toml", RECORD_FILE] {
        assert!(record.files.iter().any(|x| x == f), "{f} not listed");
        assert!(record.run_dir.join(f).exists(), "{f} not written");
    }
    let written: Vec<String> =
        fs::read_dir(&record.run_dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(written.iter().all(|w| record.files.contains(w)));
    let header = fs::read_to_string(record.run_dir.join("constants.csv")).unwrap();
    assert!(header.starts_with("mu,variant,constant,retained\n"));
    let stored: RunRecord = toml::from_str(&fs::read_to_string(record.run_dir.join(RECORD_FILE)).unwrap()).unwrap();
    assert_eq!(stored.config_hash, c.hash());
    assert!(stored.passed);
}

#[test]
fn propagation_emits_its_files() {
    let mut c = load("propagation");
    c.parameters.trials = Some(4);
    c.parameters.mu = Some(vec![5.0, 9.0, 13.0]);
    let dir = tempfile::tempdir().unwrap();
    let record = run_experiment(&c, dir.path(), false).unwrap();
    for f in ["region_sups.csv", "alpha_fit.csv"] {
        assert!(record.run_dir.join(f).exists());
    }
}

#[test]
fn same_config_and_seed_give_identical_csvs() {
    let mut c = load("control-hum");
    c.parameters.max_frequency = Some(8.0);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&c, a.path(), false).unwrap();
    let rb = run_experiment(&c, b.path(), false).unwrap();
    assert_eq!(ra.config_hash, rb.config_hash);
    let csvs: Vec<&String> = ra.files.iter().filter(|f| f.ends_with(".csv")).collect();
    assert!(!csvs.is_empty());
    for f in csvs {
        assert_eq!(fs::read(ra.run_dir.join(f)).unwrap(), fs::read(rb.run_dir.join(f)).unwrap(), "{f}");
    }
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(other.hash(), c.hash());
}

#[test]
fn empty_report_has_zero_tables() {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&Report::default(), dir.path()).unwrap();
    assert_eq!(files.len(), 1);
    assert!(fs::read_to_string(&files[0]).unwrap().starts_with("tables: 0\n"));
    assert!(Report::default().passed());
}

#[test]
fn under_resolution_warns_or_fails() {
    let mut c = ExperimentConfig::from_toml(SMALL_SPECINEQ).unwrap();
    c.parameters.mu = Some(vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    let report = build_report(&c, false).unwrap();
    assert_eq!(report.warnings.len(), 1);
    assert!(matches!(build_report(&c, true), Err(RunError::Config(ConfigError::Invalid { .. }))));
}

#[test]
fn spectrum_matches_closed_form_in_two_dimensions() {
    let text = r#"
experiment = "spectrum"
seed = 0

[domain]
dim = 2
extent = 6.283185307179586
resolution = 12

[coefficients]
type = "constant"
kappa = 3.0
metric = { xx = 2.0, xy = 0.0, yy = 0.5 }
"#;
    let report = build_report(&ExperimentConfig::from_toml(text).unwrap(), false).unwrap();
    assert!(report.passed(), "{}", report.summary());
    assert_eq!(report.assertions.len(), 1);
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("c.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_bin(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_spectrolab")).args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let out = out.to_str().unwrap();
    let good = write_config(dir.path(), SMALL_SPECINEQ);
    let good = good.to_str().unwrap();
    assert_eq!(run_bin(&["specineq", "--config", good, "--out", out]), 0);
    assert_eq!(run_bin(&["control", "--config", good, "--out", out]), 2);
    assert_eq!(run_bin(&["specineq", "--config", "/nonexistent.toml", "--out", out]), 2);

    let strict_fail = SMALL_SPECINEQ.replace("mu = [1.0, 2.0, 3.0, 4.0, 5.0]", "mu = [2.0, 4.0, 6.0, 8.0, 10.0]");
    let path = write_config(dir.path(), &strict_fail);
    assert_eq!(run_bin(&["specineq", "--config", path.to_str().unwrap(), "--out", out, "--strict"]), 2);

    // an unattainable fit threshold is an assertion failure
    let failing = format!("{SMALL_SPECINEQ}min_r_squared = 1.0000001\n");
    let path = write_config(dir.path(), &failing);
    assert_eq!(run_bin(&["specineq", "--config", path.to_str().unwrap(), "--out", out, "--seed", "9"]), 1);
}
