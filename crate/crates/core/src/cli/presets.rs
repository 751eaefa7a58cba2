//! Built-in scenarios, one per verification experiment.

use std::f64::consts::PI;

use super::config::{
    BoundarySpec, ModeSpec, Model, Oracle, RandomSpec, Refine, ScenarioConfig, TimeProfile,
};
use crate::domain::{Geometry, PhysicalParams};

/// Subcommand a preset is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Run,
    Decay,
    Converge,
    Oracle,
    Compat,
    Perturb,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Run => "run",
            Task::Decay => "decay",
            Task::Converge => "converge",
            Task::Oracle => "oracle",
            Task::Compat => "compat",
            Task::Perturb => "perturb",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub task: Task,
    pub description: &'static str,
    pub config: ScenarioConfig,
}

const NAMES: &[&str] = &[
    "empty",
    "linear-mode1",
    "modal-convergence-dt",
    "modal-convergence-h",
    "rate-bound-b1",
    "rate-bound-b4",
    "rate-bound-b0p1",
    "branch-structure",
    "boundary-lifting",
    "nonlinear-scan",
    "quadratic-scaling",
    "vinf-rate",
    "boundary-switch-off",
    "compat-mismatch",
    "compat-p1.4",
    "compat-p1.5",
    "degeneracy-above",
    "degeneracy-below",
    "eigen-crosscheck",
    "eigen-crosscheck-disk",
    "perturb-nonlinear",
];

pub fn names() -> &'static [&'static str] {
    NAMES
}

pub fn all() -> Vec<Preset> {
    NAMES.iter().map(|n| preset(n).expect("listed preset exists")).collect()
}

fn base(name: &str) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        ..Default::default()
    }
}

fn params(c: f64, b: f64, k: f64) -> PhysicalParams {
    PhysicalParams { c, b, k, rho0: 1.0 }
}

fn exp_boundary(rate: f64) -> BoundarySpec {
    BoundarySpec {
        profile: TimeProfile::Exponential {
            rate,
            c0: 1.0,
            c1: 0.0,
            c2: 0.0,
        },
        ..Default::default()
    }
}

fn bump_boundary(end: f64) -> BoundarySpec {
    BoundarySpec {
        profile: TimeProfile::Bump { end },
        constant: 1.0,
        slope: vec![-0.3],
        ..Default::default()
    }
}

fn rate_bound(name: &str, b: f64, t_end: f64, dt: f64) -> ScenarioConfig {
    let mut c = base(name);
    c.seed = 7;
    c.params = params(1.0, b, 0.0);
    c.solver.model = Model::Linear;
    c.solver.t_end = t_end;
    c.solver.dt = dt;
    c.data.amplitude = 1e-3;
    c.data.random = Some(RandomSpec { modes: 5, u1: true });
    c.study.mode_table = (1..=5).collect();
    c
}

/// Small nonlinear data: mode 1 plus an exponentially decaying boundary value.
fn nonlinear_small(name: &str, amplitude: f64, t_end: f64) -> ScenarioConfig {
    let mut c = base(name);
    c.params = params(1.0, 1.0, 1.0);
    c.solver.t_end = t_end;
    c.solver.dt = 0.01;
    c.data.amplitude = amplitude;
    c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
    c.data.boundary = Some(exp_boundary(1.0));
    c
}

pub fn preset(name: &str) -> Option<Preset> {
    let (task, description, config) = match name {
        "empty" => (Task::Run, "zero data on (0, π); everything stays zero", base(name)),
        "linear-mode1" => {
            let mut c = base(name);
            c.solver.model = Model::Linear;
            c.solver.t_end = 40.0;
            c.solver.dt = 0.02;
            c.data.amplitude = 1.0;
            c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
            (Task::Run, "linear mode-1 decay; ‖u‖ decays at ω0 = 0.5", c)
        }
        "modal-convergence-dt" => {
            let mut c = base(name);
            c.solver.model = Model::Linear;
            c.solver.t_end = 2.0;
            c.data.amplitude = 1.0;
            c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
            c.study.converge.refine = Refine::Dt;
            c.study.converge.oracle = Oracle::Modal;
            c.study.converge.levels = vec![0.1, 0.05, 0.025, 0.0125];
            c.study.converge.fixed_cells = 2000;
            (Task::Converge, "time-step refinement against the modal solution", c)
        }
        "modal-convergence-h" => {
            let mut c = base(name);
            c.solver.model = Model::Linear;
            c.solver.t_end = 2.0;
            c.data.amplitude = 1.0;
            c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
            c.study.converge.refine = Refine::Cells;
            c.study.converge.oracle = Oracle::Modal;
            c.study.converge.levels = vec![16.0, 32.0, 64.0, 128.0];
            c.study.converge.fixed_dt = 1e-3;
            (Task::Converge, "grid refinement against the modal solution", c)
        }
        "rate-bound-b1" => (
            Task::Oracle,
            "random five-mode data, c = b = 1; rate ≥ ω0 = 0.5",
            rate_bound(name, 1.0, 40.0, 0.02),
        ),
        "rate-bound-b4" => (
            Task::Oracle,
            "random five-mode data, c = 1, b = 4; rate ≥ ω0 = 0.25",
            rate_bound(name, 4.0, 60.0, 0.02),
        ),
        "rate-bound-b0p1" => (
            Task::Oracle,
            "random five-mode data, c = 1, b = 0.1; rate ≥ ω0 = 0.05",
            rate_bound(name, 0.1, 200.0, 0.02),
        ),
        "branch-structure" => {
            let mut c = base(name);
            c.solver.model = Model::Linear;
            c.solver.t_end = 40.0;
            c.solver.dt = 0.01;
            c.grid.cells = vec![128];
            c.study.mode_table = (1..=10).collect();
            (Task::Oracle, "single-mode rates of modes 1..10 against the modal roots", c)
        }
        "boundary-lifting" => {
            let mut c = base(name);
            c.solver.model = Model::Linear;
            c.solver.dt = 0.005;
            c.grid.cells = vec![128];
            c.data.amplitude = 1.0;
            c.data.boundary = Some(bump_boundary(1.0));
            c.study.lifting.t_max = 20.0;
            (Task::Oracle, "heat-equation lifting of a bump boundary value against direct stepping", c)
        }
        "nonlinear-scan" => {
            let mut c = nonlinear_small(name, 1e-3, 40.0);
            c.study.amplitudes = vec![1e-1, 1e-2, 1e-3];
            (Task::Decay, "k = 1 amplitude scan; small data decay at ω0", c)
        }
        "quadratic-scaling" => {
            let mut c = nonlinear_small(name, 1e-2, 40.0);
            c.study.amplitudes = vec![1e-2, 5e-3];
            (Task::Decay, "nonlinear minus linear solution scales quadratically with the data", c)
        }
        "vinf-rate" => {
            let mut c = nonlinear_small(name, 1e-2, 40.0);
            c.data.v0.gradient_modes = vec![ModeSpec::new(2, 0.5)];
            (Task::Run, "‖v - v_∞‖ decays at least as fast as ‖∇u‖", c)
        }
        "boundary-switch-off" => {
            let mut c = base(name);
            c.params = params(1.0, 1.0, 1.0);
            c.solver.t_end = 40.0;
            c.solver.dt = 0.01;
            c.data.amplitude = 1e-2;
            c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
            c.data.boundary = Some(bump_boundary(1.0));
            c.diagnostics.derivative_start = Some(1.5);
            (Task::Decay, "boundary bump switched off at t = 1; time derivatives decay at ω0", c)
        }
        "compat-mismatch" => {
            let mut c = base(name);
            c.data.amplitude = 0.1;
            c.data.boundary = Some(exp_boundary(1.0));
            c.data.match_boundary = false;
            (Task::Compat, "g(0) differs from u0 on the boundary; strict mode rejects", c)
        }
        "compat-p1.4" => {
            let mut c = base(name);
            c.diagnostics.p = 1.4;
            c.data.amplitude = 0.1;
            c.data.boundary = Some(exp_boundary(1.0));
            c.data.match_boundary_rate = false;
            (Task::Compat, "p < 3/2: the first-order condition is not checked", c)
        }
        "compat-p1.5" => {
            let mut c = base(name);
            c.diagnostics.p = 1.5;
            (Task::Compat, "p = 3/2 is rejected", c)
        }
        "degeneracy-above" => {
            let mut c = base(name);
            c.params = params(1.0, 1.0, 1.0);
            c.solver.t_end = 1.2;
            c.data.amplitude = 0.6;
            c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
            (Task::Run, "u0 above 1/(2k); aborts with a degeneracy", c)
        }
        "degeneracy-below" => {
            let mut c = base(name);
            c.params = params(1.0, 1.0, 1.0);
            c.solver.t_end = 1.2;
            c.solver.nonlinear.degeneracy_guard = 0.02;
            c.data.amplitude = 0.475;
            c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
            (Task::Run, "u0 just below 1/(2k); runs past t = 1", c)
        }
        "eigen-crosscheck" => {
            let mut c = base(name);
            c.grid.geometry = Geometry::Rectangle { lx: PI, ly: PI };
            c.grid.cells = vec![32, 32];
            (Task::Oracle, "numeric λ0 against 2 on the square (0, π)²", c)
        }
        "eigen-crosscheck-disk" => {
            let mut c = base(name);
            c.grid.geometry = Geometry::Disk { radius: 1.0 };
            c.grid.cells = vec![64];
            (Task::Oracle, "numeric λ0 against j_{0,1}² on the unit disk", c)
        }
        "perturb-nonlinear" => {
            let mut c = nonlinear_small(name, 1e-2, 2.0);
            c.study.perturb.deltas = vec![1e-2, 1e-3, 1e-4];
            (Task::Perturb, "difference quotients of the data-to-solution map", c)
        }
        _ => return None,
    };
    Some(Preset {
        name: NAMES.iter().find(|n| **n == name)?,
        task,
        description,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for p in all() {
            assert_eq!(p.config.name, p.name);
            let sc = p.config.build();
            if p.name == "compat-p1.5" {
                continue;
            }
            assert!(sc.is_ok(), "{}: {:?}", p.name, sc.err());
        }
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for p in all() {
            let back = ScenarioConfig::from_toml(&p.config.to_toml()).unwrap();
            assert_eq!(back, p.config, "{}", p.name);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(preset("nope").is_none());
    }
}
