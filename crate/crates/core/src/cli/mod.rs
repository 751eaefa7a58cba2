//! Command-line scenario runner.
//!
//! Every subcommand reads a scenario (from `--config`, a built-in `--preset`
//! or the all-default configuration), writes `config.toml` and
//! `summary.json` to the output directory (plus `timeseries.csv` for
//! trajectory runs) and prints the summary to stdout.
//!
//! Exit codes: 0 success, 2 validation failure, 3 degeneracy, 4 numerical
//! failure.

pub mod config;
pub mod output;
pub mod presets;
pub mod studies;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::linear_solver::Validation;
use config::ScenarioConfig;
use studies::{exit_code, Summary};

#[derive(Debug, Parser)]
#[command(name = "kuznetsov", version, about = "Nonlinear acoustics solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one scenario and write its time series.
    Run(Common),
    /// Solve and report decay rates, including time derivatives.
    Decay(Common),
    /// Refinement study against an exact solution.
    Converge(Common),
    /// Comparisons with closed-form solutions.
    Oracle(Common),
    /// Check the compatibility conditions only.
    Compat(Common),
    /// Difference quotients of the data-to-solution map.
    Perturb(Common),
    /// List the built-in scenarios.
    Presets,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory [default: out/<name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Reject incompatible data.
    #[arg(long, conflicts_with = "permissive")]
    strict: bool,
    /// Warn about incompatible data and run anyway.
    #[arg(long)]
    permissive: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
                ScenarioConfig::from_toml(&text)?
            }
            (None, Some(name)) => presets::preset(name)
                .ok_or_else(|| Error::invalid(format!("unknown preset {name:?}")))?
                .config,
            (None, None) => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if self.strict {
            c.solver.validation = Validation::Strict;
        }
        if self.permissive {
            c.solver.validation = Validation::Permissive;
        }
        Ok(c)
    }

    fn out_dir(&self, config: &ScenarioConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| output::default_dir(config))
    }
}

/// Entry point of the binary.
pub fn main_entry() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run_cli(std::env::args_os())
}

/// Parses `args` (program name first) and executes the subcommand.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, common) = match &cli.command {
        Command::Presets => {
            for p in presets::all() {
                println!("{:<22} {:<9} {}", p.name, p.task.name(), p.description);
            }
            return 0;
        }
        Command::Run(c) => ("run", c),
        Command::Decay(c) => ("decay", c),
        Command::Converge(c) => ("converge", c),
        Command::Oracle(c) => ("oracle", c),
        Command::Compat(c) => ("compat", c),
        Command::Perturb(c) => ("perturb", c),
    };
    let config = match common.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let dir = common.out_dir(&config);
    let summary = match execute(name, &config, &dir) {
        Ok(s) => s,
        Err(e) => Summary::for_error(name, &config, &e),
    };
    if let Err(e) = output::write_config(&dir, &config).and_then(|_| output::write_summary(&dir, &summary)) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    println!("{}", summary.to_json());
    if let Some(m) = &summary.message {
        eprintln!("{}: {m}", summary.status);
    }
    summary.exit_code
}

/// Runs one subcommand; trajectory runs write their time series to `dir`.
pub fn execute(command: &str, config: &ScenarioConfig, dir: &std::path::Path) -> Result<Summary> {
    match command {
        "run" => {
            let out = studies::run_scenario(config, "run")?;
            output::write_run(dir, &out)?;
            Ok(out.summary)
        }
        "decay" => {
            let (mut out, _) = studies::run_decay(config)?;
            if !config.study.amplitudes.is_empty() {
                let scan = studies::amplitude_scan(config)?;
                let mut obj = out.summary.report.take().unwrap_or(serde_json::json!({}));
                obj["amplitude_scan"] = report(&scan);
                out.summary.report = Some(obj);
            }
            output::write_run(dir, &out)?;
            Ok(out.summary)
        }
        "converge" => {
            let mut s = Summary::for_study(command, config)?;
            match studies::run_convergence(config) {
                Ok(r) => s.report = Some(report(&r)),
                Err(e) => s.set_error(&e),
            }
            Ok(s)
        }
        "oracle" => {
            let mut s = Summary::for_study(command, config)?;
            match studies::run_oracle(config) {
                Ok(r) => s.report = Some(report(&r)),
                Err(e) => s.set_error(&e),
            }
            Ok(s)
        }
        "compat" => {
            let mut s = Summary::for_study(command, config)?;
            match studies::run_compat(config) {
                Ok(r) => {
                    s.checks.insert("compatible".into(), r.ok());
                    let strict = config.solver.validation == Validation::Strict;
                    if strict && !r.ok() {
                        s.set_error(&Error::Validation(Box::new(r)));
                    } else {
                        s.report = Some(report(&r));
                    }
                }
                Err(e) => s.set_error(&e),
            }
            Ok(s)
        }
        "perturb" => {
            let mut s = Summary::for_study(command, config)?;
            match studies::run_perturbation(config) {
                Ok(r) => {
                    s.report = Some(report(&r));
                }
                Err(e) => s.set_error(&e),
            }
            Ok(s)
        }
        other => Err(Error::invalid(format!("unknown command {other:?}"))),
    }
}

fn report<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let cli = Cli::try_parse_from(["kuznetsov", "run", "--preset", "rate-bound-b1", "--seed", "3", "--permissive"]).unwrap();
        let Command::Run(common) = cli.command else { panic!("run expected") };
        let c = common.load().unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.solver.validation, Validation::Permissive);
        assert_eq!(common.out_dir(&c), PathBuf::from("out/rate-bound-b1"));
    }

    #[test]
    fn strict_and_permissive_conflict() {
        assert!(Cli::try_parse_from(["kuznetsov", "run", "--strict", "--permissive"]).is_err());
    }

    #[test]
    fn unknown_preset_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run_cli(["kuznetsov", "run", "--preset", "missing", "--out", out]), 2);
    }
}
