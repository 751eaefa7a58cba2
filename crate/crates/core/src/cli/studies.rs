//! Scenario runs and the studies behind the subcommands. Everything here is a
//! pure function of the configuration, so repeated runs give identical output.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{Mode, Oracle, PerturbTarget, Refine, Scenario, ScenarioConfig};
use crate::diagnostics::{
    convergence_study, derivative_decay_report, fit_decay_rate, perturbation_study, ConvergenceReport, DerivativeReport, FitOptions,
    PerturbationReport, RateFit,
};
use crate::domain::{analytic_lambda0, discrete_norm, discrete_vector_norm, numeric_lambda0, Domain, NormOrder};
use crate::error::{Error, Result};
use crate::linear_solver::{lift_boundary, solve_boundary_problem_direct, solve_linear, ModalRoots, Trajectory};
use crate::nonlinear_solver::{run_kuznetsov, v_infinity, VInfinity};
use crate::operators::{DirichletOperator, Field, VectorField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status of a failed run.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Validation(_) | Error::UnsupportedExponent(_) | Error::InvalidArgument(_) => 2,
        Error::Degeneracy { .. } => 3,
        Error::NumericalFailure { .. } | Error::Truncation { .. } | Error::NoLimit(_) | Error::StudyInvalid { .. } => 4,
    }
}

fn status(error: Option<&Error>) -> &'static str {
    match error {
        None => "ok",
        Some(Error::Validation(_)) => "validation-failure",
        Some(Error::UnsupportedExponent(_)) => "unsupported-exponent",
        Some(Error::InvalidArgument(_)) => "invalid-argument",
        Some(Error::Degeneracy { .. }) => "degeneracy",
        Some(Error::Truncation { .. }) => "truncation",
        Some(Error::NoLimit(_)) => "no-limit",
        Some(Error::NumericalFailure { .. }) | Some(Error::StudyInvalid { .. }) => "numerical-failure",
    }
}

/// Machine-readable record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub version: String,
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub lambda0: f64,
    pub omega0: f64,
    pub p: f64,
    pub samples: usize,
    pub final_time: f64,
    /// The run stopped before `t_end`.
    pub truncated: bool,
    pub min_degeneracy_factor: f64,
    pub max_newton_iterations: usize,
    pub final_norms: BTreeMap<String, f64>,
    pub max_norms: BTreeMap<String, f64>,
    pub rates: BTreeMap<String, RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vinf_tail_bound: Option<f64>,
    pub checks: BTreeMap<String, bool>,
    /// Subcommand-specific report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<serde_json::Value>,
    pub config: ScenarioConfig,
}

impl Summary {
    fn skeleton(command: &str, sc: &Scenario) -> Self {
        Self {
            name: sc.config.name.clone(),
            version: VERSION.into(),
            command: command.into(),
            status: "ok".into(),
            exit_code: 0,
            message: None,
            lambda0: sc.lambda0,
            omega0: sc.omega0,
            p: sc.config.diagnostics.p,
            samples: 0,
            final_time: 0.0,
            truncated: false,
            min_degeneracy_factor: 1.0,
            max_newton_iterations: 0,
            final_norms: BTreeMap::new(),
            max_norms: BTreeMap::new(),
            rates: BTreeMap::new(),
            vinf_tail_bound: None,
            checks: BTreeMap::new(),
            report: None,
            config: sc.config.clone(),
        }
    }

    /// Summary of a study that records no trajectory.
    pub fn for_study(command: &str, config: &ScenarioConfig) -> Result<Self> {
        Ok(Self::skeleton(command, &config.build()?))
    }

    /// Summary of a configuration that could not be turned into a problem.
    pub fn for_error(command: &str, config: &ScenarioConfig, error: &Error) -> Self {
        Self {
            name: config.name.clone(),
            version: VERSION.into(),
            command: command.into(),
            status: status(Some(error)).into(),
            exit_code: exit_code(error),
            message: Some(error.to_string()),
            lambda0: analytic_lambda0(&config.grid.geometry),
            omega0: f64::NAN,
            p: config.diagnostics.p,
            samples: 0,
            final_time: 0.0,
            truncated: true,
            min_degeneracy_factor: f64::NAN,
            max_newton_iterations: 0,
            final_norms: BTreeMap::new(),
            max_norms: BTreeMap::new(),
            rates: BTreeMap::new(),
            vinf_tail_bound: None,
            checks: BTreeMap::new(),
            report: error_report(error),
            config: config.clone(),
        }
    }

    pub fn set_error(&mut self, error: &Error) {
        self.status = status(Some(error)).into();
        self.exit_code = exit_code(error);
        self.message = Some(error.to_string());
        if self.report.is_none() {
            self.report = error_report(error);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn error_report(error: &Error) -> Option<serde_json::Value> {
    match error {
        Error::Validation(report) => serde_json::to_value(report.as_ref()).ok(),
        Error::Degeneracy { t, node, position, value } => {
            Some(serde_json::json!({ "t": t, "node": node, "position": position, "value": value }))
        }
        Error::NumericalFailure { last_iterate, trace, .. } => {
            Some(serde_json::json!({ "last_iterate": last_iterate, "trace": trace }))
        }
        Error::StudyInvalid { table, .. } => Some(serde_json::json!({ "table": table })),
        _ => None,
    }
}

/// Everything produced by one solve.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub trajectory: Trajectory,
    pub error: Option<Error>,
    pub vinf: Option<VInfinity>,
    /// `‖v(t) - v_∞‖_{W¹_p}` per sample (NaN without a limit).
    pub v_deviation: Vec<f64>,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, exit_code)
    }

    pub fn rate(&self, key: &str) -> Option<RateFit> {
        self.summary.rates.get(key).copied()
    }
}

/// Solves with the linear or nonlinear model as configured. Failures of the
/// solve are reported in the outcome together with the partial trajectory.
pub fn solve(sc: &Scenario) -> (Trajectory, Option<Error>) {
    match sc.nonlinear() {
        None => match solve_linear(&sc.problem) {
            Ok(t) => (t, None),
            Err(e) => (Trajectory::new(sc.problem.dt), Some(e)),
        },
        Some(cfg) => match run_kuznetsov(&sc.problem, &cfg) {
            Ok(t) => (t, None),
            Err(e) => (e.partial, Some(e.source)),
        },
    }
}

fn fit_options(sc: &Scenario) -> FitOptions {
    let d = &sc.config.diagnostics;
    FitOptions {
        window: d.fit_window.map(|w| (w[0], w[1])),
        tail_fraction: d.tail_fraction,
        ..Default::default()
    }
}

pub fn run_scenario(config: &ScenarioConfig, command: &str) -> Result<RunOutcome> {
    let sc = config.build()?;
    let (trajectory, error) = solve(&sc);
    Ok(analyse(sc, trajectory, error, command))
}

/// Norm series, rate fits, `v_∞` and pass flags of a (possibly partial) run.
pub fn analyse(sc: Scenario, trajectory: Trajectory, error: Option<Error>, command: &str) -> RunOutcome {
    let mut summary = Summary::skeleton(command, &sc);
    let d = sc.domain().clone();
    let p = sc.config.diagnostics.p;
    let diag = &trajectory.diagnostics;
    summary.samples = trajectory.len();
    summary.final_time = trajectory.last().map_or(0.0, |s| s.t);
    summary.truncated = error.is_some();
    summary.min_degeneracy_factor = diag.iter().map(|s| s.min_factor).fold(f64::INFINITY, f64::min);
    if diag.is_empty() {
        summary.min_degeneracy_factor = f64::NAN;
    }
    summary.max_newton_iterations = diag.iter().map(|s| s.newton_iterations).max().unwrap_or(0);

    let (vinf, v_deviation) = match v_infinity(&trajectory, &sc.problem.params, &d, p) {
        Ok(vi) => {
            let dev = trajectory
                .states
                .iter()
                .map(|s| {
                    let mut diff: VectorField = s.v.clone();
                    diff.axpy(-1.0, &vi.v_inf);
                    discrete_vector_norm(&diff, &d, NormOrder::new(p, 1).expect("validated p")).unwrap_or(f64::NAN)
                })
                .collect();
            (Some(vi), dev)
        }
        Err(e) => {
            log::info!("no velocity limit: {e}");
            (None, vec![f64::NAN; trajectory.len()])
        }
    };

    let series: Vec<(&str, Vec<f64>)> = vec![
        ("u_lp", diag.iter().map(|s| s.u_norms[0]).collect()),
        ("u_w1p", diag.iter().map(|s| s.u_norms[1]).collect()),
        ("u_w2p", diag.iter().map(|s| s.u_norms[2]).collect()),
        ("ut_lp", diag.iter().map(|s| s.ut_norms[0]).collect()),
        ("ut_w1p", diag.iter().map(|s| s.ut_norms[1]).collect()),
        ("ut_w2p", diag.iter().map(|s| s.ut_norms[2]).collect()),
        ("grad_u_lp", diag.iter().map(|s| s.grad_u_lp).collect()),
        ("v_minus_vinf_w1p", v_deviation.clone()),
    ];
    let times = trajectory.times();
    let opts = fit_options(&sc);
    for (key, values) in &series {
        if let Some(v) = values.last() {
            summary.final_norms.insert(key.to_string(), *v);
            summary.max_norms.insert(key.to_string(), values.iter().cloned().fold(0.0, f64::max));
        }
        let mut o = opts;
        if *key == "v_minus_vinf_w1p" {
            let t_end = summary.final_time;
            let end = sc.config.diagnostics.vinf_fit_end_fraction * t_end;
            let start = o.window.map_or(t_end * (1.0 - o.tail_fraction), |w| w.0);
            o.window = Some((start, end.min(o.window.map_or(end, |w| w.1))));
        }
        // an identically vanishing series has no rate
        let nonzero = values.iter().any(|v| *v > 0.0);
        if error.is_none() && nonzero {
            if let Ok(fit) = fit_decay_rate(&times, values, o) {
                summary.rates.insert(key.to_string(), fit);
            }
        }
    }
    summary.vinf_tail_bound = vinf.as_ref().map(|v| v.tail_bound);

    let target = sc.config.diagnostics.rate_margin * sc.omega0;
    for key in ["u_w2p", "ut_lp", "v_minus_vinf_w1p"] {
        if let Some(f) = summary.rates.get(key) {
            summary.checks.insert(format!("rate_{key}_ge_margin_omega0"), f.valid && f.rate >= target);
        }
    }
    if let (Some(v), Some(g)) = (summary.rates.get("v_minus_vinf_w1p"), summary.rates.get("grad_u_lp")) {
        summary.checks.insert("rate_v_minus_vinf_ge_margin_grad_u".into(), v.valid && v.rate >= sc.config.diagnostics.rate_margin * g.rate);
    }
    if let Some(cfg) = sc.nonlinear() {
        summary.checks.insert(
            "degeneracy_guard_held".into(),
            diag.iter().all(|s| s.min_factor > cfg.degeneracy_guard),
        );
    }
    if let Some(e) = &error {
        summary.set_error(e);
    }
    RunOutcome {
        scenario: sc,
        trajectory,
        error,
        vinf,
        v_deviation,
        summary,
    }
}

/// Derivative decay report of a completed run, with pass flags.
pub fn run_decay(config: &ScenarioConfig) -> Result<(RunOutcome, Option<DerivativeReport>)> {
    let mut out = run_scenario(config, "decay")?;
    if out.error.is_some() {
        return Ok((out, None));
    }
    let sc = &out.scenario;
    let diag = &sc.config.diagnostics;
    let report = match derivative_decay_report(&out.trajectory, sc.domain(), diag.j_max, config.derivative_start(), diag.p) {
        Ok(r) => r,
        Err(e) => {
            out.summary.set_error(&e);
            out.error = Some(e);
            return Ok((out, None));
        }
    };
    let target = diag.rate_margin * sc.omega0;
    let ok = |f: &Option<RateFit>| f.is_some_and(|f| f.valid && f.rate >= target);
    let u_ok = report.orders.iter().all(|o| ok(&o.u_fit));
    let v_ok = report.orders.iter().filter(|o| o.order >= 1).all(|o| ok(&o.v_fit));
    out.summary.checks.insert("derivative_rates_u_ge_margin_omega0".into(), u_ok);
    out.summary.checks.insert("derivative_rates_v_ge_margin_omega0".into(), v_ok);
    out.summary.checks.insert("derivative_orders_not_degraded".into(), !report.degraded());
    out.summary.report = serde_json::to_value(&report).ok();
    Ok((out, Some(report)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub amplitude: f64,
    pub status: String,
    pub rates: BTreeMap<String, f64>,
    pub min_degeneracy_factor: f64,
    /// `max_t ‖u_nonlinear - u_linear‖_{L_p}` for the same data.
    pub linear_deviation: f64,
    pub checks: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// `deviation[i] / deviation[i+1]` for consecutive amplitudes.
    pub deviation_ratios: Vec<f64>,
    /// Largest amplitude whose run completed with every rate check passing;
    /// an empirical smallness threshold for this data family.
    pub largest_passing_amplitude: Option<f64>,
}

/// Runs the scenario at every amplitude of `study.amplitudes`.
pub fn amplitude_scan(config: &ScenarioConfig) -> Result<ScanReport> {
    let mut rows = Vec::new();
    for &a in &config.study.amplitudes {
        let mut c = config.clone();
        c.data.amplitude = a;
        let out = run_scenario(&c, "decay")?;
        let mut lin = out.scenario.clone();
        lin.config.solver.model = super::config::Model::Linear;
        let (lt, lerr) = solve(&lin);
        let mut deviation = f64::NAN;
        if lerr.is_none() && out.error.is_none() {
            let d = out.scenario.domain();
            let order = NormOrder::lp(c.diagnostics.p)?;
            deviation = 0.0;
            for (x, y) in out.trajectory.states.iter().zip(&lt.states) {
                let mut diff = x.u.clone();
                diff.axpy(-1.0, &y.u);
                deviation = deviation.max(discrete_norm(&diff, d, order)?);
            }
        }
        rows.push(ScanRow {
            amplitude: a,
            status: out.summary.status.clone(),
            rates: out.summary.rates.iter().map(|(k, f)| (k.clone(), f.rate)).collect(),
            min_degeneracy_factor: out.summary.min_degeneracy_factor,
            linear_deviation: deviation,
            checks: out.summary.checks.clone(),
        });
    }
    let deviation_ratios = rows.windows(2).map(|w| w[0].linear_deviation / w[1].linear_deviation).collect();
    let largest_passing_amplitude = rows
        .iter()
        .filter(|r| r.status == "ok" && !r.checks.is_empty() && r.checks.values().all(|c| *c))
        .map(|r| r.amplitude)
        .reduce(f64::max);
    Ok(ScanReport {
        rows,
        deviation_ratios,
        largest_passing_amplitude,
    })
}

/// Largest nodal deviation from the modal solution over all samples.
pub fn modal_error(sc: &Scenario, trajectory: &Trajectory) -> Result<f64> {
    let mut err: f64 = 0.0;
    for s in &trajectory.states {
        let exact = sc.modal_solution(s.t)?;
        for (a, b) in s.u.values().iter().zip(exact.values()) {
            err = err.max((a - b).abs());
        }
    }
    Ok(err)
}

/// Error of the configured oracle at one refinement level.
fn oracle_error(config: &ScenarioConfig) -> Result<(f64, f64)> {
    let sc = config.build()?;
    let h = sc.domain().max_spacing();
    let (traj, err) = solve(&sc);
    if let Some(e) = err {
        return Err(e);
    }
    let e = match config.study.converge.oracle {
        Oracle::Modal => modal_error(&sc, &traj)?,
        Oracle::Stationary => traj
            .states
            .iter()
            .flat_map(|s| s.u.values().iter().zip(sc.problem.u0.values()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max),
    };
    Ok((h, e))
}

pub fn run_convergence(config: &ScenarioConfig) -> Result<ConvergenceReport> {
    let spec = &config.study.converge;
    let dim = config.grid.geometry.dim();
    match spec.refine {
        Refine::Dt => convergence_study(&spec.levels, |dt| {
            let mut c = config.clone();
            c.solver.dt = dt;
            c.grid.cells = vec![spec.fixed_cells; dim];
            Ok(oracle_error(&c)?.1)
        }),
        Refine::Cells => {
            // the study runs on spacings; map each back to its cell count
            let mut hs = Vec::new();
            for &n in &spec.levels {
                let mut c = config.clone();
                c.grid.cells = vec![n as usize; dim];
                hs.push(Domain::new(c.grid.geometry, &c.grid.cells)?.max_spacing());
            }
            let by_h: Vec<(f64, usize)> = hs.iter().cloned().zip(spec.levels.iter().map(|n| *n as usize)).collect();
            convergence_study(&hs, |h| {
                let n = by_h.iter().find(|(x, _)| *x == h).map(|(_, n)| *n).expect("level exists");
                let mut c = config.clone();
                c.grid.cells = vec![n; dim];
                c.solver.dt = spec.fixed_dt;
                Ok(oracle_error(&c)?.1)
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRateRow {
    pub index: usize,
    pub lambda: f64,
    /// `-max Re μ` of `μ² + bλμ + c²λ = 0`.
    pub oracle_rate: f64,
    pub fitted_rate: f64,
    pub relative_error: f64,
    /// The modal roots are real (`b²λ ≥ 4c²`).
    pub real_roots: bool,
}

/// Decay rate of each single mode (slow-eigen data, linear model) against
/// the root of the modal quadratic, fitted on `(‖u_t‖² + c²‖∇u‖²)^{1/2}`.
/// Each run lasts `25 / rate` (at least 10), whatever the configured `t_end`.
pub fn mode_rate_table(config: &ScenarioConfig, modes: &[usize]) -> Result<Vec<ModeRateRow>> {
    let mut rows = Vec::new();
    for &m in modes {
        let mut c = config.clone();
        c.solver.model = super::config::Model::Linear;
        c.data.u0_modes = vec![super::config::ModeSpec::new(m, 1.0)];
        c.data.u1_modes.clear();
        c.data.random = None;
        c.data.boundary = None;
        c.data.slow_eigen_u1 = true;
        if c.data.amplitude == 0.0 {
            c.data.amplitude = 1.0;
        }
        c.diagnostics.fit_window = None;
        let mode = Mode::new(&c.grid.geometry, &[m])?;
        let roots = ModalRoots::new(&c.params, mode.lambda);
        let rate = roots.slow_rate();
        c.solver.t_end = (25.0 / rate).max(10.0);
        let sc = c.build()?;
        let traj = solve_linear(&sc.problem)?;
        let times = traj.times();
        // energy norm: never vanishes for an oscillating mode, unlike ‖u‖
        let norms: Vec<f64> = traj
            .diagnostics
            .iter()
            .map(|s| s.ut_norms[0].hypot(c.params.c * s.grad_u_lp))
            .collect();
        let fit = fit_decay_rate(&times, &norms, FitOptions::default())?;
        rows.push(ModeRateRow {
            index: m,
            lambda: mode.lambda,
            oracle_rate: rate,
            fitted_rate: fit.rate,
            relative_error: (fit.rate - rate).abs() / rate,
            real_roots: !matches!(roots, ModalRoots::Complex { .. }),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftingReport {
    /// `max |w_lift - w_direct| / max |w_direct|` over all samples.
    pub relative_sup_difference: f64,
    /// `max_t ‖w_t - bΔw‖_{L2} / max_t ‖w_t‖_{L2}` on interior nodes.
    pub identity_residual: f64,
    /// Largest deviation of the trace of `w` from `g`.
    pub trace_error: f64,
    pub tail_bound: f64,
}

/// Boundary lifting against direct stepping of `w_tt - bΔw_t = 0`.
pub fn lifting_comparison(sc: &Scenario) -> Result<LiftingReport> {
    let d = sc.domain();
    let p = &sc.problem.params;
    let lift = &sc.config.study.lifting;
    let dt = sc.problem.dt;
    let lifted = lift_boundary(&sc.problem.g, p, d, dt, lift.t_max, lift.tail_tol, true)?;
    let direct = solve_boundary_problem_direct(&sc.problem.g, p, d, dt, lift.t_max)?;
    let op = DirichletOperator::new(d);
    let l2 = NormOrder::lp(2.0)?;
    let (mut diff, mut scale, mut res, mut rate, mut trace): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in lifted.trajectory.states.iter().zip(&direct.states) {
        for (x, y) in a.u.values().iter().zip(b.u.values()) {
            diff = diff.max((x - y).abs());
            scale = scale.max(y.abs());
        }
        let lap = op.apply_full(a.u.values());
        let mut r = Field::zeros(d);
        for i in d.interior_nodes() {
            r.values_mut()[i] = a.ut.values()[i] - p.b * lap[i];
        }
        res = res.max(discrete_norm(&r, d, l2)?);
        rate = rate.max(discrete_norm(&a.ut, d, l2)?);
        let g = sc.problem.g.values(d, a.t);
        for (x, y) in crate::operators::boundary_trace(&a.u, d).iter().zip(&g) {
            trace = trace.max((x - y).abs());
        }
    }
    Ok(LiftingReport {
        relative_sup_difference: if scale > 0.0 { diff / scale } else { diff },
        identity_residual: if rate > 0.0 { res / rate } else { res },
        trace_error: trace,
        tail_bound: lifted.tail_bound,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenReport {
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

pub fn eigen_crosscheck(domain: &Domain) -> Result<EigenReport> {
    let analytic = analytic_lambda0(domain.geometry());
    let numeric = numeric_lambda0(&DirichletOperator::new(domain), domain, 1e-13, 5000)?;
    Ok(EigenReport {
        analytic,
        numeric,
        relative_error: (numeric - analytic).abs() / analytic,
    })
}

/// The `oracle` subcommand: modal comparison, per-mode rates, lifting and
/// the eigenvalue cross-check, each where the scenario supports it.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OracleReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modal_max_error: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mode_rates: Vec<ModeRateRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifting: Option<LiftingReport>,
    pub eigen: Option<EigenReport>,
}

pub fn run_oracle(config: &ScenarioConfig) -> Result<OracleReport> {
    let sc = config.build()?;
    let mut report = OracleReport {
        eigen: Some(eigen_crosscheck(sc.domain())?),
        ..Default::default()
    };
    if sc.config.data.boundary.is_none() && !sc.modes.is_empty() {
        let mut lin = sc.clone();
        lin.config.solver.model = super::config::Model::Linear;
        let traj = solve_linear(&lin.problem)?;
        report.modal_max_error = Some(modal_error(&lin, &traj)?);
    }
    if !config.study.mode_table.is_empty() {
        report.mode_rates = mode_rate_table(config, &config.study.mode_table)?;
    }
    if let Some(b) = &config.data.boundary {
        if b.profile.value(0.0) == 0.0 && b.profile.rate(0.0) == 0.0 {
            report.lifting = Some(lifting_comparison(&sc)?);
        }
    }
    Ok(report)
}

pub fn run_perturbation(config: &ScenarioConfig) -> Result<PerturbationReport> {
    let spec = &config.study.perturb;
    let base = config.build()?;
    let d = base.domain().clone();
    let mode = Mode::new(&config.grid.geometry, &spec.mode.index)?;
    let direction = Field::from_fn(&d, |x| spec.mode.coeff * mode.value(x));
    perturbation_study(&spec.deltas, &d, config.diagnostics.p, |delta| {
        let mut sc = base.clone();
        match spec.target {
            PerturbTarget::U0 => sc.problem.u0.axpy(delta, &direction),
            PerturbTarget::U1 => sc.problem.u1.axpy(delta, &direction),
        }
        match solve(&sc) {
            (t, None) => Ok(t),
            (_, Some(e)) => Err(e),
        }
    })
}

/// The `compat` subcommand.
pub fn run_compat(config: &ScenarioConfig) -> Result<crate::diagnostics::CompatReport> {
    let sc = config.build()?;
    let pr = &sc.problem;
    crate::domain::NormOrder::validate_for_data(pr.norm_p, pr.domain.dim())?;
    crate::diagnostics::check_compatibility(&pr.g, &pr.u0, &pr.u1, pr.norm_p, &pr.domain, pr.compat_tol)
}

/// Rebuilds a scenario on a given domain (used by refinement studies).
pub fn rebuild_on(config: &ScenarioConfig, domain: Arc<Domain>) -> Result<Scenario> {
    config.build_on(domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{ModeSpec, Model};

    fn linear_mode(cells: usize, dt: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.solver.model = Model::Linear;
        c.grid.cells = vec![cells];
        c.solver.dt = dt;
        c.data.amplitude = 1.0;
        c.data.u0_modes = vec![ModeSpec::new(1, 1.0)];
        c
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::UnsupportedExponent(1.5)), 2);
        assert_eq!(exit_code(&Error::invalid("x")), 2);
        let deg = Error::Degeneracy { t: 0.0, node: 0, position: vec![0.0], value: -1.0 };
        assert_eq!(exit_code(&deg), 3);
        assert_eq!(exit_code(&Error::NoLimit("x".into())), 4);
        assert_eq!(exit_code(&Error::Truncation { tail_bound: 1.0, tolerance: 0.1 }), 4);
    }

    #[test]
    fn zero_run_has_no_rates() {
        let out = run_scenario(&ScenarioConfig::default(), "run").unwrap();
        assert!(out.summary.rates.is_empty());
        assert!(out.summary.final_norms.values().all(|v| *v == 0.0));
        assert_eq!(out.exit_code(), 0);
    }

    #[test]
    fn modal_error_shrinks_with_dt() {
        let err = |dt| {
            let sc = linear_mode(400, dt).build().unwrap();
            let (t, e) = solve(&sc);
            assert!(e.is_none());
            modal_error(&sc, &t).unwrap()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 < 1e-3 && e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn single_mode_rates_match_roots() {
        let rows = mode_rate_table(&linear_mode(64, 0.01), &[1, 3]).unwrap();
        assert!(!rows[0].real_roots && rows[1].real_roots);
        for r in rows {
            assert!(r.relative_error < 0.01, "{r:?}");
        }
    }

    #[test]
    fn partial_run_is_reported() {
        let mut c = linear_mode(32, 0.01);
        c.solver.model = Model::Nonlinear;
        c.params.k = 1.0;
        c.data.amplitude = 0.7;
        let out = run_scenario(&c, "run").unwrap();
        assert_eq!(out.exit_code(), 3);
        assert_eq!(out.summary.status, "degeneracy");
        assert!(out.summary.truncated);
        assert_eq!(out.trajectory.len(), 1);
    }
}
