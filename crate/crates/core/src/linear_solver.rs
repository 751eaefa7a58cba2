//! Linear strongly damped wave equation `u_tt - c²Δu - bΔu_t = f`, the
//! auxiliary heat problem, the boundary lifting `w = -∫_t^∞ v ds`, and the
//! exact single-mode solution used as an oracle.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::diagnostics::check_compatibility;
use crate::domain::{discrete_norm, discrete_vector_norm, numeric_lambda0, Domain, NormOrder, PhysicalParams};
use crate::error::{Error, Result};
use crate::nonlinear_solver::integrate_velocity;
use crate::operators::{DirichletOperator, Field, VectorField};

/// Function of `(t, x)`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Time-dependent Dirichlet data `g` with an optional analytic `∂_t g`.
#[derive(Clone, Default)]
pub struct BoundaryData {
    g: Option<SpaceTimeFn>,
    gt: Option<SpaceTimeFn>,
    support_end: Option<f64>,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryData")
            .field("zero", &self.g.is_none())
            .field("analytic_rate", &self.gt.is_some())
            .field("support_end", &self.support_end)
            .finish()
    }
}

impl BoundaryData {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(g: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            g: Some(Arc::new(g)),
            gt: None,
            support_end: None,
        }
    }

    pub fn with_rate(mut self, gt: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.gt = Some(Arc::new(gt));
        self
    }

    /// Declares `g ≡ 0` for `t > end`.
    pub fn with_support_end(mut self, end: f64) -> Self {
        self.support_end = Some(end);
        self
    }

    pub fn support_end(&self) -> Option<f64> {
        self.support_end
    }

    pub fn is_zero(&self) -> bool {
        self.g.is_none()
    }

    fn switched_off(&self, t: f64) -> bool {
        self.support_end.is_some_and(|end| t > end)
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match &self.g {
            Some(g) if !self.switched_off(t) => g(t, x),
            _ => 0.0,
        }
    }

    /// `∂_t g`, analytic when provided, otherwise a central difference.
    pub fn rate(&self, t: f64, x: &[f64]) -> f64 {
        if self.switched_off(t) {
            return 0.0;
        }
        match (&self.gt, &self.g) {
            (Some(gt), _) => gt(t, x),
            (None, Some(g)) => {
                let e = 1e-5 * t.abs().max(1.0);
                (g(t + e, x) - g(t - e, x)) / (2.0 * e)
            }
            (None, None) => 0.0,
        }
    }

    pub fn values(&self, domain: &Domain, t: f64) -> Vec<f64> {
        domain.boundary_nodes().map(|i| self.value(t, domain.point(i))).collect()
    }

    pub fn rates(&self, domain: &Domain, t: f64) -> Vec<f64> {
        domain.boundary_nodes().map(|i| self.rate(t, domain.point(i))).collect()
    }

    pub(crate) fn scaled(&self, s: f64) -> Self {
        let g = self.g.clone().map(|g| -> SpaceTimeFn { Arc::new(move |t, x| s * g(t, x)) });
        let gt = self.gt.clone().map(|g| -> SpaceTimeFn { Arc::new(move |t, x| s * g(t, x)) });
        Self {
            g,
            gt,
            support_end: self.support_end,
        }
    }
}

fn eval_forcing(f: &Option<SpaceTimeFn>, domain: &Domain, t: f64) -> Vec<f64> {
    match f {
        Some(f) => domain.interior_nodes().map(|i| f(t, domain.point(i))).collect(),
        None => vec![0.0; domain.n_interior()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Crank-Nicolson, second order.
    #[default]
    Trapezoidal,
    /// First order, L-stable.
    BackwardEuler,
}

impl TimeScheme {
    fn theta(self) -> f64 {
        match self {
            TimeScheme::Trapezoidal => 0.5,
            TimeScheme::BackwardEuler => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Validation {
    /// Compatibility violations are errors.
    #[default]
    Strict,
    /// Compatibility violations are logged and the run proceeds.
    Permissive,
}

/// Data of `u_tt - c²Δu - bΔu_t = f`, `u|Γ = g`, `(u, u_t)(0) = (u0, u1)`;
/// the velocity `v` (from `v_t = -ρ0⁻¹∇u`, `v(0) = v0`) is carried along.
#[derive(Clone)]
pub struct LinearProblem {
    pub params: PhysicalParams,
    pub domain: Arc<Domain>,
    pub forcing: Option<SpaceTimeFn>,
    pub g: BoundaryData,
    pub u0: Field,
    pub u1: Field,
    pub v0: VectorField,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: TimeScheme,
    /// Store every n-th step.
    pub record_every: usize,
    /// Lebesgue exponent for reported norms and data validation.
    pub norm_p: f64,
    pub validation: Validation,
    /// Compatibility tolerance; `None` means `10 h²`.
    pub compat_tol: Option<f64>,
}

impl fmt::Debug for LinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearProblem")
            .field("params", &self.params)
            .field("geometry", self.domain.geometry())
            .field("forcing", &self.forcing.is_some())
            .field("g", &self.g)
            .field("t_end", &self.t_end)
            .field("dt", &self.dt)
            .field("scheme", &self.scheme)
            .field("norm_p", &self.norm_p)
            .field("validation", &self.validation)
            .finish_non_exhaustive()
    }
}

impl LinearProblem {
    /// Zero data on `domain`; fill in the public fields as needed.
    pub fn new(params: PhysicalParams, domain: Arc<Domain>, dt: f64, t_end: f64) -> Self {
        Self {
            params,
            u0: Field::zeros(&domain),
            u1: Field::zeros(&domain),
            v0: VectorField::zeros(&domain),
            domain,
            forcing: None,
            g: BoundaryData::zero(),
            t_end,
            dt,
            scheme: TimeScheme::Trapezoidal,
            record_every: 1,
            norm_p: 2.0,
            validation: Validation::Strict,
            compat_tol: None,
        }
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return Err(Error::invalid(format!(
                "need dt > 0 and t_end >= dt (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        let n = self.domain.n_nodes();
        if self.u0.len() != n || self.u1.len() != n || self.v0.dim() != self.domain.dim() {
            return Err(Error::invalid("initial data does not match the domain"));
        }
        if self.v0.components().iter().any(|c| c.len() != n) {
            return Err(Error::invalid("initial velocity does not match the domain"));
        }
        NormOrder::validate_for_data(self.norm_p, self.domain.dim())?;
        let report = check_compatibility(&self.g, &self.u0, &self.u1, self.norm_p, &self.domain, self.compat_tol)?;
        if !report.ok() {
            match self.validation {
                Validation::Strict => return Err(Error::Validation(Box::new(report))),
                Validation::Permissive => log::warn!("proceeding with incompatible data: {report:?}"),
            }
        }
        Ok(())
    }

    /// Data scaled by `s` (forcing, boundary data and initial values).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.forcing = self.forcing.clone().map(|f| -> SpaceTimeFn { Arc::new(move |t, x| s * f(t, x)) });
        out.g = self.g.scaled(s);
        out.u0 = self.u0.scaled(s);
        out.u1 = self.u1.scaled(s);
        out.v0 = self.v0.scaled(s);
        out
    }
}

/// Solution snapshot `(u, u_t, v)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub ut: Field,
    pub v: VectorField,
}

impl State {
    pub fn zeros(domain: &Domain, t: f64) -> Self {
        Self {
            t,
            u: Field::zeros(domain),
            ut: Field::zeros(domain),
            v: VectorField::zeros(domain),
        }
    }
}

/// Per-sample diagnostics. Norm triples are `[L_p, W¹_p, W²_p]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub u_norms: [f64; 3],
    pub ut_norms: [f64; 3],
    pub v_w1: f64,
    pub grad_u_lp: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    pub newton_iterations: usize,
}

impl StepDiagnostics {
    pub fn measure(state: &State, domain: &Domain, k: f64, p: f64, newton_iterations: usize) -> Result<Self> {
        let norms = |f: &Field| -> Result<[f64; 3]> {
            Ok([
                discrete_norm(f, domain, NormOrder::new(p, 0)?)?,
                discrete_norm(f, domain, NormOrder::new(p, 1)?)?,
                discrete_norm(f, domain, NormOrder::new(p, 2)?)?,
            ])
        };
        let grad = crate::operators::gradient(&state.u, domain);
        let (min_factor, max_factor) = state
            .u
            .values()
            .iter()
            .map(|u| 1.0 - 2.0 * k * u)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f), hi.max(f)));
        Ok(Self {
            t: state.t,
            u_norms: norms(&state.u)?,
            ut_norms: norms(&state.ut)?,
            v_w1: discrete_vector_norm(&state.v, domain, NormOrder::new(p, 1)?)?,
            grad_u_lp: discrete_vector_norm(&grad, domain, NormOrder::new(p, 0)?)?,
            min_factor,
            max_factor,
            newton_iterations,
        })
    }
}

/// Uniformly sampled solution history.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Sample spacing.
    pub dt: f64,
    pub states: Vec<State>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            states: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn push(&mut self, state: State, diagnostics: StepDiagnostics) {
        self.states.push(state);
        self.diagnostics.push(diagnostics);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }
}

/// θ-scheme for the first-order system `u' = w`, `w' = c²Δu + bΔw + f`,
/// with one factorization of `I - dtθ(b + c² dtθ)A` reused for every step.
pub(crate) struct DampedWaveStepper {
    op: DirichletOperator,
    lu: BandedLu,
    stiffness: f64,
    damping: f64,
    dt: f64,
    theta: f64,
}

impl DampedWaveStepper {
    /// `stiffness` is `c²` (zero allowed), `damping` is `b`.
    pub(crate) fn new(domain: &Domain, stiffness: f64, damping: f64, dt: f64, scheme: TimeScheme) -> Result<Self> {
        let op = DirichletOperator::new(domain);
        let theta = scheme.theta();
        let mut m = BandedMatrix::identity(domain.n_interior(), op.bandwidth());
        op.add_scaled_to(&mut m, -dt * theta * (damping + stiffness * dt * theta));
        Ok(Self {
            lu: m.factor()?,
            op,
            stiffness,
            damping,
            dt,
            theta,
        })
    }

    /// Advances `(u, w)` from `t` to `t + dt`; boundary values of the result are
    /// `g(t + dt)` and `g_t(t + dt)`.
    pub(crate) fn step(
        &self,
        domain: &Domain,
        u: &Field,
        w: &Field,
        t: f64,
        g: &BoundaryData,
        forcing: &Option<SpaceTimeFn>,
    ) -> Result<(Field, Field)> {
        let (dt, th) = (self.dt, self.theta);
        let (c2, b) = (self.stiffness, self.damping);
        let ni = domain.n_interior();
        let t1 = t + dt;
        let g1 = g.values(domain, t1);
        let gt1 = g.rates(domain, t1);
        let f0 = eval_forcing(forcing, domain, t);
        let f1 = eval_forcing(forcing, domain, t1);
        let lu0 = self.op.apply_full(u.values());
        let lw0 = self.op.apply_full(w.values());
        let ui = u.interior(domain);
        let wi = w.interior(domain);
        let pred: Vec<f64> = ui.iter().zip(wi).map(|(u, w)| u + dt * (1.0 - th) * w).collect();
        let a_pred = self.op.apply_full(&Field::extend(&pred, &g1).into_values());
        let b_gt = self.op.apply_full(&Field::extend(&vec![0.0; ni], &gt1).into_values());
        let mut rhs = vec![0.0; ni];
        for i in 0..ni {
            let f_old = c2 * lu0[i] + b * lw0[i] + f0[i];
            rhs[i] = wi[i] + dt * (1.0 - th) * f_old + dt * th * (c2 * a_pred[i] + b * b_gt[i] + f1[i]);
        }
        self.lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite values in damped-wave solve"));
        }
        let u_new: Vec<f64> = (0..ni)
            .map(|i| ui[i] + dt * ((1.0 - th) * wi[i] + th * rhs[i]))
            .collect();
        Ok((Field::extend(&u_new, &g1), Field::extend(&rhs, &gt1)))
    }
}

/// One step of the linear problem from `state` at time `t`.
pub fn step_damped_wave(state: &State, problem: &LinearProblem, t: f64) -> Result<State> {
    let p = &problem.params;
    let d = &problem.domain;
    let stepper = DampedWaveStepper::new(d, p.c * p.c, p.b, problem.dt, problem.scheme)?;
    let (u, ut) = stepper.step(d, &state.u, &state.ut, t, &problem.g, &problem.forcing)?;
    let v = integrate_velocity(&state.v, &state.u, &u, p, problem.dt, d);
    Ok(State { t: t + problem.dt, u, ut, v })
}

/// Full trajectory of the linear problem.
pub fn solve_linear(problem: &LinearProblem) -> Result<Trajectory> {
    problem.validate()?;
    let p = &problem.params;
    let d = &problem.domain;
    let stepper = DampedWaveStepper::new(d, p.c * p.c, p.b, problem.dt, problem.scheme)?;
    let mut traj = Trajectory::new(problem.dt * problem.record_every as f64);
    let mut state = State {
        t: 0.0,
        u: problem.u0.clone(),
        ut: problem.u1.clone(),
        v: problem.v0.clone(),
    };
    traj.push(state.clone(), StepDiagnostics::measure(&state, d, p.k, problem.norm_p, 0)?);
    for n in 1..=problem.n_steps() {
        let (u, ut) = stepper.step(d, &state.u, &state.ut, state.t, &problem.g, &problem.forcing)?;
        let v = integrate_velocity(&state.v, &state.u, &u, p, problem.dt, d);
        state = State {
            t: n as f64 * problem.dt,
            u,
            ut,
            v,
        };
        if n % problem.record_every == 0 {
            traj.push(state.clone(), StepDiagnostics::measure(&state, d, p.k, problem.norm_p, 0)?);
        }
    }
    Ok(traj)
}

/// Roots of `μ² + bλμ + c²λ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModalRoots {
    /// Two real roots, `slow > fast`.
    Real { slow: f64, fast: f64 },
    /// `re ± i im`.
    Complex { re: f64, im: f64 },
    Double(f64),
}

impl ModalRoots {
    pub fn new(params: &PhysicalParams, lambda: f64) -> Self {
        let bl = params.b * lambda;
        let c2l = params.c * params.c * lambda;
        let disc = bl * bl - 4.0 * c2l;
        if disc.abs() <= 1e-13 * bl * bl {
            ModalRoots::Double(-bl / 2.0)
        } else if disc > 0.0 {
            // avoid cancellation in the slow root
            let fast = -(bl + disc.sqrt()) / 2.0;
            ModalRoots::Real { slow: c2l / fast, fast }
        } else {
            ModalRoots::Complex {
                re: -bl / 2.0,
                im: (-disc).sqrt() / 2.0,
            }
        }
    }

    /// Decay rate of the slowest component, `-max Re μ`.
    pub fn slow_rate(&self) -> f64 {
        match *self {
            ModalRoots::Real { slow, .. } => -slow,
            ModalRoots::Complex { re, .. } => -re,
            ModalRoots::Double(mu) => -mu,
        }
    }

    /// Solution of `α'' + bλα' + c²λα = 0` with `α(0) = a`, `α'(0) = beta`:
    /// returns `(α(t), α'(t))`.
    pub fn evolve(&self, a: f64, beta: f64, t: f64) -> (f64, f64) {
        match *self {
            ModalRoots::Real { slow, fast } => {
                let c_slow = (beta - fast * a) / (slow - fast);
                let c_fast = a - c_slow;
                let (es, ef) = ((slow * t).exp(), (fast * t).exp());
                (c_slow * es + c_fast * ef, slow * c_slow * es + fast * c_fast * ef)
            }
            ModalRoots::Complex { re, im } => {
                let s = (beta - re * a) / im;
                let e = (re * t).exp();
                let (sn, cs) = (im * t).sin_cos();
                let alpha = e * (a * cs + s * sn);
                let dalpha = re * alpha + e * (-a * im * sn + s * im * cs);
                (alpha, dalpha)
            }
            ModalRoots::Double(mu) => {
                let s = beta - mu * a;
                let e = (mu * t).exp();
                ((a + s * t) * e, (s + mu * (a + s * t)) * e)
            }
        }
    }
}

/// Exact amplitude of mode `m` (`sin(mπ(x - a)/ℓ)` on an interval of length
/// `length`) with initial amplitude `a` and rate `beta`: `(α(t), α'(t))`.
pub fn modal_solution_1d(m: usize, params: &PhysicalParams, length: f64, coefficients: (f64, f64), t: f64) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::invalid("mode index starts at 1"));
    }
    let lambda = (m as f64 * std::f64::consts::PI / length).powi(2);
    Ok(ModalRoots::new(params, lambda).evolve(coefficients.0, coefficients.1, t))
}

/// θ-scheme solve of `v_t - bΔv = f`, `v|Γ = boundary`, `v(0) = u_init`.
/// States store `v` in `u` and `bΔv + f` in `ut`.
#[allow(clippy::too_many_arguments)]
pub fn heat_solve(
    params: &PhysicalParams,
    domain: &Domain,
    boundary: &BoundaryData,
    forcing: &Option<SpaceTimeFn>,
    u_init: &Field,
    dt: f64,
    t_end: f64,
    scheme: TimeScheme,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::invalid("need dt > 0 and t_end >= dt"));
    }
    if u_init.len() != domain.n_nodes() {
        return Err(Error::invalid("initial value does not match the domain"));
    }
    let b = params.b;
    let op = DirichletOperator::new(domain);
    let th = scheme.theta();
    let mut m = BandedMatrix::identity(domain.n_interior(), op.bandwidth());
    op.add_scaled_to(&mut m, -dt * th * b);
    let lu = m.factor()?;
    let ni = domain.n_interior();
    let rate_of = |v: &Field, t: f64| -> Field {
        let lap = op.apply_full(v.values());
        let f = eval_forcing(forcing, domain, t);
        let interior: Vec<f64> = lap.iter().zip(&f).map(|(l, f)| b * l + f).collect();
        Field::extend(&interior, &boundary.rates(domain, t))
    };
    let n_steps = ((t_end / dt) - 1e-9).ceil() as usize;
    let mut traj = Trajectory::new(dt);
    let mut v = u_init.clone();
    let mut rate = rate_of(&v, 0.0);
    let record = |traj: &mut Trajectory, t: f64, v: &Field, rate: &Field| {
        let diag = StepDiagnostics {
            t,
            u_norms: [f64::NAN; 3],
            ut_norms: [f64::NAN; 3],
            v_w1: f64::NAN,
            grad_u_lp: f64::NAN,
            min_factor: 1.0,
            max_factor: 1.0,
            newton_iterations: 0,
        };
        traj.push(
            State {
                t,
                u: v.clone(),
                ut: rate.clone(),
                v: VectorField::zeros(domain),
            },
            diag,
        );
    };
    record(&mut traj, 0.0, &v, &rate);
    for n in 1..=n_steps {
        let t1 = n as f64 * dt;
        let h1 = boundary.values(domain, t1);
        let f1 = eval_forcing(forcing, domain, t1);
        let coupling = op.boundary_coupling(&h1);
        let vi = v.interior(domain);
        let mut rhs: Vec<f64> = (0..ni)
            .map(|i| vi[i] + dt * (1.0 - th) * rate.values()[i] + dt * th * (b * coupling[i] + f1[i]))
            .collect();
        lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("non-finite values in heat solve"));
        }
        v = Field::extend(&rhs, &h1);
        rate = rate_of(&v, t1);
        record(&mut traj, t1, &v, &rate);
    }
    Ok(traj)
}

/// Result of [`lift_boundary`]: states hold `w` in `u` and `w_t = v` in `ut`.
#[derive(Debug, Clone)]
pub struct Lifting {
    pub trajectory: Trajectory,
    /// `‖v(t_max)‖_{L2} / (bλ0)`, the estimated size of the truncated tail.
    pub tail_bound: f64,
    /// Discrete heat decay rate `bλ0` used for the tail.
    pub heat_rate: f64,
}

/// Solves `w_tt - bΔw_t = 0`, `w|Γ = g`, `w(0) = w_t(0) = 0` by the lifting
/// `w(t) = -∫_t^∞ v ds`, where `v_t - bΔv = 0`, `v|Γ = ∂_t g`, `v(0) = 0`.
///
/// The integral is truncated at `t_max` and closed with the geometric tail
/// `v(t_max) / (bλ0)`; [`Error::Truncation`] is returned if the tail bound
/// exceeds `tail_tol`.
pub fn lift_boundary(
    g: &BoundaryData,
    params: &PhysicalParams,
    domain: &Domain,
    dt: f64,
    t_max: f64,
    tail_tol: f64,
    require_rate_compat: bool,
) -> Result<Lifting> {
    let tol0 = 1e-10;
    let g0 = g.values(domain, 0.0);
    if g0.iter().any(|v| v.abs() > tol0) {
        return Err(Error::invalid("lifting needs g(0) = 0 on the boundary"));
    }
    if require_rate_compat && g.rates(domain, 0.0).iter().any(|v| v.abs() > tol0) {
        return Err(Error::invalid("lifting needs g_t(0) = 0 on the boundary"));
    }
    let src = g.clone();
    let heat_bc = BoundaryData::new(move |t, x| src.rate(t, x));
    let heat = heat_solve(
        params,
        domain,
        &heat_bc,
        &None,
        &Field::zeros(domain),
        dt,
        t_max,
        TimeScheme::Trapezoidal,
    )?;
    let op = DirichletOperator::new(domain);
    let lambda0 = numeric_lambda0(&op, domain, 1e-12, 2000)?;
    let heat_rate = params.b * lambda0;
    let last = heat.states.last().expect("heat trajectory has the initial state");
    let tail_bound = discrete_norm(&last.u, domain, NormOrder::lp(2.0)?)? / heat_rate;
    if tail_bound > tail_tol {
        return Err(Error::Truncation {
            tail_bound,
            tolerance: tail_tol,
        });
    }
    let n = heat.states.len();
    let n_nodes = domain.n_nodes();
    // cumulative trapezoid from the end, seeded with the tail
    let mut acc: Vec<f64> = last.u.values().iter().map(|v| v / heat_rate).collect();
    let mut w = vec![Vec::new(); n];
    w[n - 1] = acc.clone();
    for k in (0..n - 1).rev() {
        let (a, b) = (heat.states[k].u.values(), heat.states[k + 1].u.values());
        for i in 0..n_nodes {
            acc[i] += 0.5 * dt * (a[i] + b[i]);
        }
        w[k] = acc.clone();
    }
    let mut trajectory = Trajectory::new(dt);
    for (k, state) in heat.states.into_iter().enumerate() {
        let wf = Field::from_values(w[k].iter().map(|x| -x).collect());
        let s = State {
            t: state.t,
            u: wf,
            ut: state.u,
            v: VectorField::zeros(domain),
        };
        let diag = StepDiagnostics::measure(&s, domain, 0.0, 2.0, 0)?;
        trajectory.push(s, diag);
    }
    Ok(Lifting {
        trajectory,
        tail_bound,
        heat_rate,
    })
}

/// Direct θ-scheme stepping of `w_tt - bΔw_t = 0` with `w|Γ = g` and zero
/// initial data (the damped wave operator with `c = 0`).
pub fn solve_boundary_problem_direct(
    g: &BoundaryData,
    params: &PhysicalParams,
    domain: &Domain,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    let stepper = DampedWaveStepper::new(domain, 0.0, params.b, dt, TimeScheme::Trapezoidal)?;
    let n_steps = ((t_end / dt) - 1e-9).ceil() as usize;
    let mut traj = Trajectory::new(dt);
    let mut s = State::zeros(domain, 0.0);
    s.u.set_boundary(domain, &g.values(domain, 0.0));
    s.ut.set_boundary(domain, &g.rates(domain, 0.0));
    traj.push(s.clone(), StepDiagnostics::measure(&s, domain, 0.0, 2.0, 0)?);
    for n in 1..=n_steps {
        let (u, ut) = stepper.step(domain, &s.u, &s.ut, s.t, g, &None)?;
        s = State {
            t: n as f64 * dt,
            u,
            ut,
            v: VectorField::zeros(domain),
        };
        traj.push(s.clone(), StepDiagnostics::measure(&s, domain, 0.0, 2.0, 0)?);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use std::f64::consts::PI;

    fn interval(n: usize) -> Arc<Domain> {
        Arc::new(Domain::new(Geometry::Interval { start: 0.0, length: PI }, &[n]).unwrap())
    }

    fn unit() -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let prob = LinearProblem::new(unit(), interval(20), 0.01, 0.5);
        let traj = solve_linear(&prob).unwrap();
        assert_eq!(traj.len(), 51);
        for s in &traj.states {
            assert_eq!(s.u.max_abs(), 0.0);
            assert_eq!(s.ut.max_abs(), 0.0);
            assert_eq!(s.v.max_abs(), 0.0);
        }
        let s = step_damped_wave(&traj.states[0], &prob, 0.0).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
    }

    #[test]
    fn modal_roots_examples() {
        match ModalRoots::new(&unit(), 1.0) {
            ModalRoots::Complex { re, im } => {
                assert!((re + 0.5).abs() < 1e-15);
                assert!((im - 3f64.sqrt() / 2.0).abs() < 1e-15);
            }
            r => panic!("{r:?}"),
        }
        let r = ModalRoots::new(&unit(), 9.0);
        match r {
            ModalRoots::Real { slow, fast } => {
                assert!((slow - (-9.0_f64 + 45f64.sqrt()) / 2.0).abs() < 1e-12);
                assert!((fast - (-9.0_f64 - 45f64.sqrt()) / 2.0).abs() < 1e-12);
            }
            r => panic!("{r:?}"),
        }
        assert!((r.slow_rate() - 1.1459).abs() < 1e-4);
        assert!(matches!(ModalRoots::new(&unit(), 4.0), ModalRoots::Double(_)));
        for t in [0.0, 0.7, 3.0] {
            assert_eq!(modal_solution_1d(1, &unit(), PI, (0.0, 0.0), t).unwrap(), (0.0, 0.0));
        }
        assert!(modal_solution_1d(0, &unit(), PI, (1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn modal_solution_satisfies_ode() {
        // finite-difference residual of α'' + bλα' + c²λα in all three regimes
        for (lambda, b) in [(1.0, 1.0), (9.0, 1.0), (4.0, 1.0), (2.0, 0.3)] {
            let p = PhysicalParams::new(1.0, b, 0.0, 1.0).unwrap();
            let r = ModalRoots::new(&p, lambda);
            let (a, beta) = (0.8, -0.3);
            assert!((r.evolve(a, beta, 0.0).0 - a).abs() < 1e-14);
            assert!((r.evolve(a, beta, 0.0).1 - beta).abs() < 1e-13);
            let e = 1e-4;
            for t in [0.3, 1.1, 2.5] {
                let (x, dx) = r.evolve(a, beta, t);
                let xp = r.evolve(a, beta, t + e).0;
                let xm = r.evolve(a, beta, t - e).0;
                let d2 = (xp - 2.0 * x + xm) / (e * e);
                let d1 = (xp - xm) / (2.0 * e);
                assert!((d1 - dx).abs() < 1e-6);
                let res = d2 + b * lambda * dx + lambda * x;
                assert!(res.abs() < 1e-5, "λ={lambda}: {res}");
            }
        }
    }

    #[test]
    fn mode_one_matches_oracle() {
        let d = interval(200);
        let mut prob = LinearProblem::new(unit(), d.clone(), 0.005, 2.0);
        prob.u0 = Field::from_fn(&d, |x| x[0].sin());
        let traj = solve_linear(&prob).unwrap();
        let mut err: f64 = 0.0;
        for s in &traj.states {
            let (a, _) = modal_solution_1d(1, &unit(), PI, (1.0, 0.0), s.t).unwrap();
            for i in 0..d.n_nodes() {
                err = err.max((s.u.values()[i] - a * d.point(i)[0].sin()).abs());
            }
        }
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn manufactured_solution_converges() {
        // u* = e^{-t} sin x; forcing from finite differences of u* in t and x,
        // independent of the solver's stencils
        let exact = |t: f64, x: f64| (-t).exp() * x.sin();
        let forcing: SpaceTimeFn = Arc::new(move |t, x| {
            let (e, x) = (1e-3, x[0]);
            let d2t = (exact(t + e, x) - 2.0 * exact(t, x) + exact(t - e, x)) / (e * e);
            let lap = |t: f64| (exact(t, x + e) - 2.0 * exact(t, x) + exact(t, x - e)) / (e * e);
            let lap_t = (lap(t + e) - lap(t - e)) / (2.0 * e);
            d2t - lap(t) - lap_t
        });
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let d = interval(n);
            let mut prob = LinearProblem::new(unit(), d.clone(), 0.4 / n as f64, 1.0);
            prob.u0 = Field::from_fn(&d, |x| exact(0.0, x[0]));
            prob.u1 = Field::from_fn(&d, |x| -exact(0.0, x[0]));
            prob.forcing = Some(forcing.clone());
            let traj = solve_linear(&prob).unwrap();
            let last = traj.last().unwrap();
            let e = (0..d.n_nodes())
                .map(|i| (last.u.values()[i] - exact(last.t, d.point(i)[0])).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.25, "{errs:?}");
        }
    }

    #[test]
    fn superposition() {
        let d = interval(40);
        let base = |amp: f64, shift: f64| {
            let mut p = LinearProblem::new(unit(), d.clone(), 0.01, 0.5);
            p.u0 = Field::from_fn(&d, |x| amp * ((2.0 * x[0]).sin() + shift * x[0] / PI));
            p.u1 = Field::from_fn(&d, |x| amp * (3.0 * x[0]).sin());
            p.g = BoundaryData::new(move |t, x| amp * shift * x[0] / PI * (-t).exp())
                .with_rate(move |t, x| -amp * shift * x[0] / PI * (-t).exp());
            p.u1 = Field::from_fn(&d, |x| amp * ((3.0 * x[0]).sin() - shift * x[0] / PI));
            p.forcing = Some(Arc::new(move |t, x| amp * (x[0] * t).cos()));
            p
        };
        let a = solve_linear(&base(1.0, 0.5)).unwrap();
        let b = solve_linear(&base(2.0, 0.5)).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (x, y) in sa.u.values().iter().zip(sb.u.values()) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_eigenmode_decays() {
        let d = interval(100);
        let init = Field::from_fn(&d, |x| x[0].sin());
        let traj = heat_solve(&unit(), &d, &BoundaryData::zero(), &None, &init, 0.01, 1.0, TimeScheme::BackwardEuler).unwrap();
        let last = traj.last().unwrap();
        let err = (0..d.n_nodes())
            .map(|i| (last.u.values()[i] - (-1.0f64).exp() * d.point(i)[0].sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01 * (-1.0f64).exp(), "{err}");
        let z = heat_solve(&unit(), &d, &BoundaryData::zero(), &None, &Field::zeros(&d), 0.01, 0.2, TimeScheme::Trapezoidal).unwrap();
        assert!(z.states.iter().all(|s| s.u.max_abs() == 0.0));
    }

    #[test]
    fn heat_manufactured_second_order() {
        // v* = e^{-t} x(π - x): v*_t - v*_xx = e^{-t}(2 - x(π - x))
        let exact = |t: f64, x: f64| (-t).exp() * x * (PI - x);
        let f: Option<SpaceTimeFn> = Some(Arc::new(move |t, x| (-t).exp() * (2.0 - x[0] * (PI - x[0]))));
        let mut errs = Vec::new();
        for n in [10, 20, 40] {
            let d = interval(n);
            let dt = 0.2 / n as f64;
            let init = Field::from_fn(&d, |x| exact(0.0, x[0]));
            let traj = heat_solve(&unit(), &d, &BoundaryData::zero(), &f, &init, dt, 1.0, TimeScheme::Trapezoidal).unwrap();
            let last = traj.last().unwrap();
            errs.push(
                (0..d.n_nodes())
                    .map(|i| (last.u.values()[i] - exact(last.t, d.point(i)[0])).abs())
                    .fold(0.0, f64::max),
            );
        }
        // quadratic in x: the spatial stencil is exact, only the time error remains
        for w in errs.windows(2) {
            assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.2, "{errs:?}");
        }
    }

    fn bump(t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            0.0
        } else {
            let s = 2.0 * t - 1.0;
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    #[test]
    fn lifting_of_zero_is_zero() {
        let d = interval(20);
        let l = lift_boundary(&BoundaryData::zero(), &unit(), &d, 0.01, 2.0, 1e-6, true).unwrap();
        assert!(l.trajectory.states.iter().all(|s| s.u.max_abs() == 0.0));
        assert_eq!(l.tail_bound, 0.0);
    }

    #[test]
    fn lifting_reproduces_trace_and_heat_identity() {
        let d = interval(60);
        let g = BoundaryData::new(|t, x| bump(t) * (1.0 - 0.4 * x[0])).with_support_end(1.0);
        let dt = 0.005;
        let l = lift_boundary(&g, &unit(), &d, dt, 16.0, 1e-6, true).unwrap();
        let op = DirichletOperator::new(&d);
        for s in l.trajectory.states.iter().step_by(20) {
            let trace = crate::operators::boundary_trace(&s.u, &d);
            for (tr, ex) in trace.iter().zip(g.values(&d, s.t)) {
                assert!((tr - ex).abs() < 1e-4, "t={} {tr} {ex}", s.t);
            }
            let lap = op.apply_full(s.u.values());
            for i in d.interior_nodes() {
                assert!((s.ut.values()[i] - lap[i]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn lifting_reports_truncation() {
        let d = interval(20);
        let g = BoundaryData::new(|t, _| bump(t)).with_support_end(1.0);
        match lift_boundary(&g, &unit(), &d, 0.01, 1.2, 1e-12, true) {
            Err(Error::Truncation { tail_bound, .. }) => assert!(tail_bound > 1e-12),
            other => panic!("{other:?}"),
        }
        let bad = BoundaryData::new(|_, _| 1.0);
        assert!(lift_boundary(&bad, &unit(), &d, 0.01, 1.0, 1.0, true).is_err());
    }

    #[test]
    fn strict_validation_rejects_mismatch() {
        let d = interval(20);
        let mut p = LinearProblem::new(unit(), d, 0.01, 0.1);
        p.g = BoundaryData::new(|_, _| 1.0);
        assert!(matches!(solve_linear(&p), Err(Error::Validation(_))));
        p.validation = Validation::Permissive;
        assert!(solve_linear(&p).is_ok());
        p.norm_p = 1.5;
        assert!(matches!(solve_linear(&p), Err(Error::UnsupportedExponent(_))));
    }
}
