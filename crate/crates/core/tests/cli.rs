use std::path::Path;
use std::process::{Command, Output};

use kuznetsov::cli::config::ScenarioConfig;
use kuznetsov::cli::output::TIMESERIES_HEADER;
use kuznetsov::cli::presets;

fn kuznetsov(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kuznetsov"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn empty_config_runs_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = tmp.path().join("out");
    let o = kuznetsov(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    for (_, v) in s["final_norms"].as_object().unwrap() {
        assert_eq!(v.as_f64(), Some(0.0));
    }
    let csv = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(TIMESERIES_HEADER));
    assert_eq!(csv.lines().count(), 101 + 1);
}

#[test]
fn linear_mode_one_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = kuznetsov(&["run", "--preset", "linear-mode1"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let rate = summary(tmp.path())["rates"]["u_lp"]["rate"].as_f64().unwrap();
    assert!((rate - 0.5).abs() < 0.02, "{rate}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str], name: &str| kuznetsov(args, &tmp.path().join(name)).status.code();
    assert_eq!(code(&["compat", "--preset", "compat-p1.5"], "a"), Some(2));
    assert_eq!(code(&["run", "--preset", "compat-p1.5"], "b"), Some(2));
    assert_eq!(code(&["run", "--preset", "compat-mismatch"], "c"), Some(2));
    assert_eq!(code(&["run", "--preset", "compat-mismatch", "--permissive"], "d"), Some(0));
    assert_eq!(code(&["run", "--preset", "degeneracy-above"], "e"), Some(3));
    assert_eq!(code(&["run", "--preset", "no-such-preset"], "f"), Some(2));
    assert_eq!(summary(&tmp.path().join("a"))["status"], "unsupported-exponent");
    // the compatibility report travels with a validation failure
    let s = summary(&tmp.path().join("c"));
    assert_eq!(s["status"], "validation-failure");
    assert_eq!(s["report"]["order0_ok"], false);
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    assert_eq!(kuznetsov(&["run", "--preset", "rate-bound-b4", "--seed", "11"], &first).status.code(), Some(0));
    let echoed = std::fs::read_to_string(first.join("config.toml")).unwrap();
    let parsed = ScenarioConfig::from_toml(&echoed).unwrap();
    assert_eq!(parsed.seed, 11);
    let second = tmp.path().join("second");
    let cfg = first.join("config.toml");
    assert_eq!(kuznetsov(&["run", "--config", cfg.to_str().unwrap()], &second).status.code(), Some(0));
    assert_eq!(
        std::fs::read(first.join("summary.json")).unwrap(),
        std::fs::read(second.join("summary.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(first.join("timeseries.csv")).unwrap(),
        std::fs::read(second.join("timeseries.csv")).unwrap()
    );
}

#[test]
fn preset_listing_names_every_preset() {
    let o = Command::new(env!("CARGO_BIN_EXE_kuznetsov")).arg("presets").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in presets::names() {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}

#[test]
fn study_subcommands_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, preset, key) in [
        ("converge", "modal-convergence-h", "orders"),
        ("oracle", "eigen-crosscheck", "eigen"),
        ("perturb", "perturb-nonlinear", "rows"),
        ("compat", "compat-p1.4", "order1_ok"),
    ] {
        let dir = tmp.path().join(cmd);
        let o = kuznetsov(&[cmd, "--preset", preset], &dir);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        let s = summary(&dir);
        assert_eq!(s["command"], cmd);
        assert!(s["report"].get(key).is_some(), "{cmd}: {}", s["report"]);
        assert!(dir.join("config.toml").exists());
    }
}
