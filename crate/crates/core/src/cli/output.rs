//! Artifact files: `config.toml`, `timeseries.csv`, `summary.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ScenarioConfig;
use super::studies::{RunOutcome, Summary};
use crate::error::{Error, Result};

pub const TIMESERIES_HEADER: &str =
    "t,u_lp,u_w1p,u_w2p,ut_lp,ut_w1p,ut_w2p,v_minus_vinf_w1p,min_degeneracy_factor,newton_iterations";

pub fn default_dir(config: &ScenarioConfig) -> PathBuf {
    Path::new("out").join(&config.name)
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::invalid(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io(path, e))
}

/// One row per recorded sample, in the fixed column order of
/// [`TIMESERIES_HEADER`]. Floats use the shortest round-trip representation.
pub fn timeseries_csv(outcome: &RunOutcome) -> String {
    let mut s = String::from(TIMESERIES_HEADER);
    s.push('\n');
    for (i, (state, d)) in outcome.trajectory.states.iter().zip(&outcome.trajectory.diagnostics).enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            state.t,
            d.u_norms[0],
            d.u_norms[1],
            d.u_norms[2],
            d.ut_norms[0],
            d.ut_norms[1],
            d.ut_norms[2],
            outcome.v_deviation.get(i).copied().unwrap_or(f64::NAN),
            d.min_factor,
            d.newton_iterations
        );
    }
    s
}

pub fn write_config(dir: &Path, config: &ScenarioConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write(&dir.join("config.toml"), &config.to_toml())
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write(&dir.join("summary.json"), &(summary.to_json() + "\n"))
}

/// Writes all artifacts of a (possibly partial) run.
pub fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    write_config(dir, &outcome.scenario.config)?;
    write(&dir.join("timeseries.csv"), &timeseries_csv(outcome))?;
    write_summary(dir, &outcome.summary)
}
