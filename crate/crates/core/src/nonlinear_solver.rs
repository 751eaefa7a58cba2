//! Time stepping of the quasilinear system
//!
//! ```text
//! (1 - 2ku) u_tt - c²Δu - bΔu_t = 2k u_t² + 2ρ0⁻¹|∇u|² - 2 v·∇u_t + f,
//! v_t = -ρ0⁻¹∇u,
//! ```
//!
//! obtained from `k(u²)_tt + ρ0(v·v)_tt` by differentiating the products and
//! substituting `v_t`. The stepper works on `(u, w = u_t)`; both schemes are
//! midpoint (Crank–Nicolson) in the linear part and keep `1 - 2ku` as the
//! coefficient of `u_tt`.

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::diagnostics::{fit_decay_rate, FitOptions};
use crate::domain::{discrete_vector_norm, Domain, NormOrder, PhysicalParams};
use crate::error::{Error, Result};
use crate::linear_solver::{BoundaryData, LinearProblem, SpaceTimeFn, State, StepDiagnostics, Trajectory};
use crate::operators::{gradient, gradient_stencil, DirichletOperator, Field, Stencil, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearScheme {
    /// Coefficients lagged at the old state; one linear solve per step.
    SemiImplicit,
    /// Newton iteration on the full midpoint residual.
    #[default]
    Newton,
}

/// Sign convention of the transport term `∓2 v·∇u_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransportSign {
    /// `-2 v·∇u_t`, as obtained by differentiating `ρ0 (v·v)_tt`.
    #[default]
    Direct,
    /// `+2 v·∇u_t`.
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearConfig {
    pub scheme: NonlinearScheme,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Smallest admissible value of `1 - 2ku`.
    pub degeneracy_guard: f64,
    /// Drop every nonlinear term (the linear problem is solved).
    pub disable_nonlinearity: bool,
    pub transport_sign: TransportSign,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            scheme: NonlinearScheme::Newton,
            newton_tol: 1e-10,
            newton_max_iter: 20,
            degeneracy_guard: 0.1,
            disable_nonlinearity: false,
            transport_sign: TransportSign::Direct,
        }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::invalid("newton_tol must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::invalid("newton_max_iter must be at least 1"));
        }
        if !(self.degeneracy_guard > 0.0 && self.degeneracy_guard < 1.0) {
            return Err(Error::invalid("degeneracy_guard must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Coefficients of `N = 2κw² + γ|∇u|² + τ v·∇w`.
#[derive(Debug, Clone, Copy)]
struct Coefficients {
    kappa: f64,
    gamma: f64,
    tau: f64,
}

impl Coefficients {
    fn new(params: &PhysicalParams, config: &NonlinearConfig) -> Self {
        if config.disable_nonlinearity {
            return Self {
                kappa: 0.0,
                gamma: 0.0,
                tau: 0.0,
            };
        }
        Self {
            kappa: params.k,
            gamma: 2.0 / params.rho0,
            tau: match config.transport_sign {
                TransportSign::Direct => -2.0,
                TransportSign::Flipped => 2.0,
            },
        }
    }
}

/// `v_old - (dt/2) ρ0⁻¹ (∇u_old + ∇u_new)` at every node.
pub fn integrate_velocity(
    v_old: &VectorField,
    u_old: &Field,
    u_new: &Field,
    params: &PhysicalParams,
    dt: f64,
    domain: &Domain,
) -> VectorField {
    let mut v = v_old.clone();
    let s = -0.5 * dt / params.rho0;
    v.axpy(s, &gradient(u_old, domain));
    v.axpy(s, &gradient(u_new, domain));
    v
}

/// Checks `1 - 2κu > guard` at every node.
fn check_degeneracy(u: &Field, kappa: f64, guard: f64, t: f64, domain: &Domain) -> Result<()> {
    if kappa == 0.0 {
        return Ok(());
    }
    let (node, value) = u
        .values()
        .iter()
        .map(|u| 1.0 - 2.0 * kappa * u)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, f)| if f < best.1 { (i, f) } else { best });
    if !(value > guard) {
        return Err(Error::Degeneracy {
            t,
            node,
            position: domain.point(node).to_vec(),
            value,
        });
    }
    Ok(())
}

/// Interior derivative along each axis, using precomputed stencils.
fn interior_gradient(stencils: &[Vec<Stencil>], values: &[f64]) -> Vec<Vec<f64>> {
    stencils
        .iter()
        .map(|axis| axis.iter().map(|st| st.iter().map(|&(j, w)| w * values[j]).sum()).collect())
        .collect()
}

/// Old-level quantities shared by every Newton iterate of one step.
struct OldLevel<'s> {
    state: &'s State,
    /// Interior `F^n = c²Δu + bΔw + N + f`.
    rhs: Vec<f64>,
    grad_u: Vec<Vec<f64>>,
    grad_w: Vec<Vec<f64>>,
}

/// Discrete midpoint system for one step of size `dt`.
pub struct KuznetsovStepper<'a> {
    domain: &'a Domain,
    params: PhysicalParams,
    config: NonlinearConfig,
    coef: Coefficients,
    op: DirichletOperator,
    /// `grad[a][i]`: derivative stencil along axis `a` at interior node `i`.
    grad: Vec<Vec<Stencil>>,
    dt: f64,
    forcing: Option<SpaceTimeFn>,
}

impl<'a> KuznetsovStepper<'a> {
    pub fn new(
        domain: &'a Domain,
        params: PhysicalParams,
        config: NonlinearConfig,
        dt: f64,
        forcing: Option<SpaceTimeFn>,
    ) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let grad = (0..domain.dim())
            .map(|a| domain.interior_nodes().map(|i| gradient_stencil(domain, i, a)).collect())
            .collect();
        Ok(Self {
            domain,
            coef: Coefficients::new(&params, &config),
            params,
            config,
            op: DirichletOperator::new(domain),
            grad,
            dt,
            forcing,
        })
    }

    fn forcing_at(&self, t: f64) -> Vec<f64> {
        match &self.forcing {
            Some(f) => self.domain.interior_nodes().map(|i| f(t, self.domain.point(i))).collect(),
            None => vec![0.0; self.domain.n_interior()],
        }
    }

    /// Interior `F = c²Δu + bΔw + N(u, w, v) + f(t)` given interior
    /// gradients and velocity.
    fn full_rhs(&self, u: &[f64], w: &[f64], grad_u: &[Vec<f64>], grad_w: &[Vec<f64>], v: &[Vec<f64>], t: f64) -> Vec<f64> {
        let Coefficients { kappa, gamma, tau } = self.coef;
        let c2 = self.params.c * self.params.c;
        let b = self.params.b;
        let lu = self.op.apply_full(u);
        let lw = self.op.apply_full(w);
        let f = self.forcing_at(t);
        (0..self.domain.n_interior())
            .map(|i| {
                let mut n = 2.0 * kappa * w[i] * w[i];
                for a in 0..self.grad.len() {
                    n += gamma * grad_u[a][i] * grad_u[a][i] + tau * v[a][i] * grad_w[a][i];
                }
                c2 * lu[i] + b * lw[i] + n + f[i]
            })
            .collect()
    }

    fn old_level<'s>(&self, state: &'s State) -> OldLevel<'s> {
        let grad_u = interior_gradient(&self.grad, state.u.values());
        let grad_w = interior_gradient(&self.grad, state.ut.values());
        let v: Vec<Vec<f64>> = state.v.components().iter().map(|c| c.values()[..self.domain.n_interior()].to_vec()).collect();
        let rhs = self.full_rhs(state.u.values(), state.ut.values(), &grad_u, &grad_w, &v, state.t);
        OldLevel { state, rhs, grad_u, grad_w }
    }

    /// New `u` (full) from the interior unknown `w` and boundary values.
    fn new_u(&self, old: &State, w: &[f64], g1: &[f64]) -> Field {
        let ui = old.u.interior(self.domain);
        let wi = old.ut.interior(self.domain);
        let half = 0.5 * self.dt;
        let u: Vec<f64> = (0..ui.len()).map(|i| ui[i] + half * (wi[i] + w[i])).collect();
        Field::extend(&u, g1)
    }

    fn residual_with(&self, old: &OldLevel, w: &[f64], g1: &[f64], gt1: &[f64]) -> Vec<f64> {
        let ni = self.domain.n_interior();
        let dt = self.dt;
        let kappa = self.coef.kappa;
        let u_new = self.new_u(old.state, w, g1);
        let w_new = Field::extend(w, gt1);
        let gu = interior_gradient(&self.grad, u_new.values());
        let gw = interior_gradient(&self.grad, w_new.values());
        let s = 0.5 * dt / self.params.rho0;
        let v: Vec<Vec<f64>> = (0..self.grad.len())
            .map(|a| {
                let v0 = old.state.v.component(a).values();
                (0..ni).map(|i| v0[i] - s * (old.grad_u[a][i] + gu[a][i])).collect()
            })
            .collect();
        let f1 = self.full_rhs(u_new.values(), w_new.values(), &gu, &gw, &v, old.state.t + dt);
        let (u0, w0) = (old.state.u.values(), old.state.ut.values());
        let u1 = u_new.values();
        (0..ni)
            .map(|i| {
                let a = 1.0 - kappa * (u0[i] + u1[i]);
                a * (w[i] - w0[i]) / dt - 0.5 * (old.rhs[i] + f1[i])
            })
            .collect()
    }

    fn jacobian_with(&self, old: &OldLevel, w: &[f64], g1: &[f64], gt1: &[f64]) -> BandedMatrix {
        let ni = self.domain.n_interior();
        let dt = self.dt;
        let Coefficients { kappa, gamma, tau } = self.coef;
        let c2 = self.params.c * self.params.c;
        let b = self.params.b;
        let rho0 = self.params.rho0;
        let u_new = self.new_u(old.state, w, g1);
        let w_new = Field::extend(w, gt1);
        let gu = interior_gradient(&self.grad, u_new.values());
        let gw = interior_gradient(&self.grad, w_new.values());
        let (u0, w0) = (old.state.u.values(), old.state.ut.values());
        let mut m = BandedMatrix::zeros(ni, self.op.bandwidth());
        for i in 0..ni {
            let a = 1.0 - kappa * (u0[i] + u_new.values()[i]);
            m.add(i, i, a / dt - kappa * 0.5 * (w[i] - w0[i]) - 2.0 * kappa * w[i]);
        }
        self.op.add_scaled_to(&mut m, -0.5 * (c2 * 0.5 * dt + b));
        for (axis, stencils) in self.grad.iter().enumerate() {
            let v0 = old.state.v.component(axis).values();
            for (i, st) in stencils.iter().enumerate() {
                let v_new = v0[i] - 0.5 * dt / rho0 * (old.grad_u[axis][i] + gu[axis][i]);
                // ½ of: 2γ(∂u)(dt/2)G + τ(v G + (∂w) ∂v/∂w), with ∂v/∂w = -dt²/(4ρ0) G
                let coeff = gamma * gu[axis][i] * dt * 0.5 + 0.5 * tau * (v_new - gw[axis][i] * dt * dt / (4.0 * rho0));
                for &(j, wt) in st {
                    if j < ni {
                        m.add(i, j, -coeff * wt);
                    }
                }
            }
        }
        m
    }

    /// Affine lagged system: residual `S` and its (constant) Jacobian.
    fn semi_implicit_system(&self, old: &OldLevel, g1: &[f64], gt1: &[f64]) -> (Vec<f64>, BandedMatrix) {
        let ni = self.domain.n_interior();
        let dt = self.dt;
        let Coefficients { kappa, gamma, tau } = self.coef;
        let c2 = self.params.c * self.params.c;
        let b = self.params.b;
        let st = old.state;
        let (u0, w0) = (st.u.values(), st.ut.values());
        // S(w) at w = w^n
        let w = &w0[..ni];
        let u_new = self.new_u(st, w, g1);
        let w_new = Field::extend(w, gt1);
        let lu0 = self.op.apply_full(u0);
        let lw0 = self.op.apply_full(w0);
        let lu1 = self.op.apply_full(u_new.values());
        let lw1 = self.op.apply_full(w_new.values());
        let gu1 = interior_gradient(&self.grad, u_new.values());
        let gw1 = interior_gradient(&self.grad, w_new.values());
        let f0 = self.forcing_at(st.t);
        let f1 = self.forcing_at(st.t + dt);
        let mut r = vec![0.0; ni];
        for i in 0..ni {
            let mut s = 0.5 * (c2 * (lu0[i] + lu1[i]) + b * (lw0[i] + lw1[i]));
            s += kappa * w0[i] * (w0[i] + w[i]);
            for a in 0..self.grad.len() {
                let v = st.v.component(a).values()[i];
                s += 0.5 * gamma * old.grad_u[a][i] * (old.grad_u[a][i] + gu1[a][i]);
                s += 0.5 * tau * v * (old.grad_w[a][i] + gw1[a][i]);
            }
            s += 0.5 * (f0[i] + f1[i]);
            let a = 1.0 - 2.0 * kappa * u0[i];
            r[i] = a * (w[i] - w0[i]) / dt - s;
        }
        let mut m = BandedMatrix::zeros(ni, self.op.bandwidth());
        for i in 0..ni {
            m.add(i, i, (1.0 - 2.0 * kappa * u0[i]) / dt - kappa * w0[i]);
        }
        self.op.add_scaled_to(&mut m, -0.5 * (c2 * 0.5 * dt + b));
        for (axis, stencils) in self.grad.iter().enumerate() {
            let v0 = st.v.component(axis).values();
            for (i, stn) in stencils.iter().enumerate() {
                let coeff = 0.5 * gamma * 0.5 * dt * old.grad_u[axis][i] + 0.5 * tau * v0[i];
                for &(j, wt) in stn {
                    if j < ni {
                        m.add(i, j, -coeff * wt);
                    }
                }
            }
        }
        (r, m)
    }

    /// Newton residual of the step from `old` for interior unknown `w`.
    pub fn residual(&self, old: &State, g: &BoundaryData, w: &[f64]) -> Vec<f64> {
        let t1 = old.t + self.dt;
        self.residual_with(&self.old_level(old), w, &g.values(self.domain, t1), &g.rates(self.domain, t1))
    }

    /// Exact Jacobian of [`Self::residual`] with respect to `w`.
    pub fn jacobian(&self, old: &State, g: &BoundaryData, w: &[f64]) -> BandedMatrix {
        let t1 = old.t + self.dt;
        self.jacobian_with(&self.old_level(old), w, &g.values(self.domain, t1), &g.rates(self.domain, t1))
    }

    /// Advances one step; returns the new state and the iteration count.
    pub fn step(&self, old: &State, g: &BoundaryData) -> Result<(State, usize)> {
        let d = self.domain;
        let ni = d.n_interior();
        let t1 = old.t + self.dt;
        let g1 = g.values(d, t1);
        let gt1 = g.rates(d, t1);
        let level = self.old_level(old);
        let mut w = old.ut.values()[..ni].to_vec();
        let iterations = match self.config.scheme {
            NonlinearScheme::SemiImplicit => {
                let (mut r, m) = self.semi_implicit_system(&level, &g1, &gt1);
                m.factor()?.solve_in_place(&mut r);
                for (wi, di) in w.iter_mut().zip(&r) {
                    *wi -= di;
                }
                1
            }
            NonlinearScheme::Newton => self.newton(&level, &mut w, &g1, &gt1)?,
        };
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!("non-finite values at t = {t1}")));
        }
        let u = self.new_u(old, &w, &g1);
        let ut = Field::extend(&w, &gt1);
        let v = integrate_velocity(&old.v, &old.u, &u, &self.params, self.dt, d);
        check_degeneracy(&u, self.coef.kappa, self.config.degeneracy_guard, t1, d)?;
        Ok((State { t: t1, u, ut, v }, iterations))
    }

    fn newton(&self, level: &OldLevel, w: &mut [f64], g1: &[f64], gt1: &[f64]) -> Result<usize> {
        let tol = self.config.newton_tol;
        let mut r = self.residual_with(level, w, g1, gt1);
        let mut trace = Vec::new();
        for it in 1..=self.config.newton_max_iter {
            let mut delta = r.clone();
            self.jacobian_with(level, w, g1, gt1).factor()?.solve_in_place(&mut delta);
            let mut step: f64 = 0.0;
            let mut size: f64 = 0.0;
            for (wi, di) in w.iter_mut().zip(&delta) {
                *wi -= di;
                step = step.max(di.abs());
                size = size.max(wi.abs());
            }
            r = self.residual_with(level, w, g1, gt1);
            let res = r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            trace.push(res);
            if !res.is_finite() {
                break;
            }
            // a roundoff-sized update means the iteration cannot improve further
            let stalled = step <= 8.0 * f64::EPSILON * (1.0 + size) && res < 1e4 * tol;
            if res < tol || stalled {
                return Ok(it);
            }
        }
        Err(Error::NumericalFailure {
            what: format!("Newton did not reach {tol:e} in {} iterations at t = {}", self.config.newton_max_iter, level.state.t + self.dt),
            last_iterate: trace.last().copied(),
            trace,
        })
    }
}

/// Midpoint residual of the primal form between two given states: interior
/// values of `a_mid (w_new - w_old)/dt - ½(F_old + F_new)` with
/// `a_mid = 1 - k(u_old + u_new)`. Boundary values of `new` are replaced by
/// `g(t_new)` and `g_t(t_new)`.
pub fn quasilinear_residual(
    new: &State,
    old: &State,
    g: &BoundaryData,
    params: &PhysicalParams,
    config: &NonlinearConfig,
    domain: &Domain,
    dt: f64,
) -> Result<Field> {
    let stepper = KuznetsovStepper::new(domain, *params, *config, dt, None)?;
    let kappa = stepper.coef.kappa;
    check_degeneracy(&old.u, kappa, config.degeneracy_guard, old.t, domain)?;
    check_degeneracy(&new.u, kappa, config.degeneracy_guard, new.t, domain)?;
    let ni = domain.n_interior();
    let t1 = old.t + dt;
    let g1 = g.values(domain, t1);
    let gt1 = g.rates(domain, t1);
    let level = stepper.old_level(old);
    let mut u_new = new.u.clone();
    u_new.set_boundary(domain, &g1);
    let w_new = Field::extend(&new.ut.values()[..ni], &gt1);
    let gu = interior_gradient(&stepper.grad, u_new.values());
    let gw = interior_gradient(&stepper.grad, w_new.values());
    let v: Vec<Vec<f64>> = new.v.components().iter().map(|c| c.values()[..ni].to_vec()).collect();
    let f1 = stepper.full_rhs(u_new.values(), w_new.values(), &gu, &gw, &v, t1);
    let (u0, w0) = (old.u.values(), old.ut.values());
    let r: Vec<f64> = (0..ni)
        .map(|i| {
            let a = 1.0 - kappa * (u0[i] + u_new.values()[i]);
            a * (w_new.values()[i] - w0[i]) / dt - 0.5 * (level.rhs[i] + f1[i])
        })
        .collect();
    Ok(Field::extend(&r, &vec![0.0; domain.n_boundary()]))
}

/// Single step of the full model from `state`.
pub fn step_kuznetsov(
    state: &State,
    g: &BoundaryData,
    params: &PhysicalParams,
    config: &NonlinearConfig,
    dt: f64,
    domain: &Domain,
) -> Result<State> {
    let stepper = KuznetsovStepper::new(domain, *params, *config, dt, None)?;
    check_degeneracy(&state.u, stepper.coef.kappa, config.degeneracy_guard, state.t, domain)?;
    Ok(stepper.step(state, g)?.0)
}

/// A failed run: the error and everything computed before it.
#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct RunError {
    pub source: Error,
    pub partial: Trajectory,
}

/// Full trajectory of the nonlinear problem with the data of `problem`.
pub fn run_kuznetsov(problem: &LinearProblem, config: &NonlinearConfig) -> std::result::Result<Trajectory, RunError> {
    let p = &problem.params;
    let d = &problem.domain;
    let mut traj = Trajectory::new(problem.dt * problem.record_every as f64);
    let fail = |source: Error, partial: Trajectory| RunError { source, partial };
    if let Err(e) = problem.validate().and_then(|_| config.validate()) {
        return Err(fail(e, traj));
    }
    let coef = Coefficients::new(p, config);
    let mut state = State {
        t: 0.0,
        u: problem.u0.clone(),
        ut: problem.u1.clone(),
        v: problem.v0.clone(),
    };
    let measure = |s: &State, it: usize| StepDiagnostics::measure(s, d, p.k, problem.norm_p, it);
    match measure(&state, 0) {
        Ok(diag) => traj.push(state.clone(), diag),
        Err(e) => return Err(fail(e, traj)),
    }
    if let Err(e) = check_degeneracy(&state.u, coef.kappa, config.degeneracy_guard, 0.0, d) {
        return Err(fail(e, traj));
    }
    let stepper = match KuznetsovStepper::new(d, *p, *config, problem.dt, problem.forcing.clone()) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, traj)),
    };
    for n in 1..=problem.n_steps() {
        let (mut next, it) = match stepper.step(&state, &problem.g) {
            Ok(x) => x,
            Err(e) => {
                log::warn!("run stopped after t = {}: {e}", state.t);
                return Err(fail(e, traj));
            }
        };
        next.t = n as f64 * problem.dt;
        state = next;
        if n % problem.record_every == 0 {
            match measure(&state, it) {
                Ok(diag) => traj.push(state.clone(), diag),
                Err(e) => return Err(fail(e, traj)),
            }
        }
    }
    Ok(traj)
}

/// Limit velocity estimate.
#[derive(Debug, Clone)]
pub struct VInfinity {
    pub v_inf: VectorField,
    /// `ρ0⁻¹‖∇u(t_max)‖_{L_p} / ω_fit`.
    pub tail_bound: f64,
    /// Fitted decay rate of `‖∇u(t)‖_{L_p}`.
    pub omega_fit: f64,
}

/// `v0 - ρ0⁻¹ ∫_0^{t_max} ∇u ds` by the trapezoidal rule over the stored
/// samples, with the size of the neglected tail.
pub fn v_infinity(trajectory: &Trajectory, params: &PhysicalParams, domain: &Domain, p: f64) -> Result<VInfinity> {
    let states = &trajectory.states;
    if states.len() < 4 {
        return Err(Error::invalid("v_infinity needs at least 4 samples"));
    }
    let dt = trajectory.dt;
    let grads: Vec<VectorField> = states.iter().map(|s| gradient(&s.u, domain)).collect();
    let mut v = states[0].v.clone();
    let s = -dt / params.rho0;
    for (k, g) in grads.iter().enumerate() {
        let w = if k == 0 || k + 1 == grads.len() { 0.5 } else { 1.0 };
        v.axpy(s * w, g);
    }
    let order = NormOrder::lp(p)?;
    let norms = grads.iter().map(|g| discrete_vector_norm(g, domain, order)).collect::<Result<Vec<_>>>()?;
    let last = *norms.last().expect("non-empty");
    if norms.iter().all(|&x| x == 0.0) {
        return Ok(VInfinity {
            v_inf: v,
            tail_bound: 0.0,
            omega_fit: f64::INFINITY,
        });
    }
    let times = trajectory.times();
    let fit = fit_decay_rate(&times, &norms, FitOptions::default())?;
    if !(fit.rate > 0.0) {
        return Err(Error::NoLimit(format!("‖∇u‖ does not decay (fitted rate {:.3e})", fit.rate)));
    }
    Ok(VInfinity {
        v_inf: v,
        tail_bound: last / (params.rho0 * fit.rate),
        omega_fit: fit.rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use crate::linear_solver::{solve_linear, Validation};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn interval(n: usize) -> Arc<Domain> {
        Arc::new(Domain::new(Geometry::Interval { start: 0.0, length: PI }, &[n]).unwrap())
    }

    fn square(n: usize) -> Arc<Domain> {
        Arc::new(Domain::new(Geometry::Rectangle { lx: PI, ly: PI }, &[n, n]).unwrap())
    }

    fn params(k: f64) -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, k, 1.0).unwrap()
    }

    #[test]
    fn product_rule_identity() {
        // u = t²: (u²)_tt = 12t², 2u u_tt + 2u_t² = 4t² + 8t²
        for t in [0.0, 0.5, 1.5, 2.0] {
            let lhs: f64 = 12.0 * t * t;
            let rhs = 2.0 * (t * t) * 2.0 + 2.0 * (2.0 * t) * (2.0 * t);
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.max(1.0));
        }
    }

    #[test]
    fn velocity_examples() {
        let d = interval(16);
        let z = Field::zeros(&d);
        let v0 = VectorField::from_fn(&d, |x| vec![x[0].cos()]);
        assert_eq!(integrate_velocity(&v0, &z, &z, &params(0.0), 0.1, &d), v0);
        let aff = Field::from_fn(&d, |x| 2.0 * x[0] + 1.0);
        let p = PhysicalParams::new(1.0, 1.0, 0.0, 2.0).unwrap();
        let v = integrate_velocity(&v0, &aff, &aff, &p, 0.1, &d);
        for i in 0..d.n_nodes() {
            let expect = v0.component(0).values()[i] - 0.1 * 2.0 / 2.0;
            assert!((v.component(0).values()[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn degeneracy_in_residual() {
        let d = interval(16);
        let mut s = State::zeros(&d, 0.0);
        s.u = Field::from_fn(&d, |_| 1.0);
        let cfg = NonlinearConfig::default();
        let r = quasilinear_residual(&s, &s, &BoundaryData::new(|_, _| 1.0), &params(0.5), &cfg, &d, 0.1);
        match r {
            Err(Error::Degeneracy { value, .. }) => assert!(value.abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_reduces_to_linear_when_k_zero() {
        // k = 0, v = 0: the residual is the midpoint damped-wave residual
        let d = interval(20);
        let op = DirichletOperator::new(&d);
        let mut old = State::zeros(&d, 0.0);
        old.u = Field::from_fn(&d, |x| x[0].sin());
        old.ut = Field::from_fn(&d, |x| (2.0 * x[0]).sin());
        let mut new = State::zeros(&d, 0.1);
        new.u = Field::from_fn(&d, |x| 0.9 * x[0].sin());
        new.ut = Field::from_fn(&d, |x| 0.8 * (2.0 * x[0]).sin());
        let cfg = NonlinearConfig {
            disable_nonlinearity: true,
            ..Default::default()
        };
        let r = quasilinear_residual(&new, &old, &BoundaryData::zero(), &params(0.7), &cfg, &d, 0.1).unwrap();
        let (lu0, lw0) = (op.apply_full(old.u.values()), op.apply_full(old.ut.values()));
        let (lu1, lw1) = (op.apply_full(new.u.values()), op.apply_full(new.ut.values()));
        for i in d.interior_nodes() {
            let e = (new.ut.values()[i] - old.ut.values()[i]) / 0.1 - 0.5 * (lu0[i] + lw0[i] + lu1[i] + lw1[i]);
            assert!((r.values()[i] - e).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_state_preserved() {
        let d = square(8);
        let s = State::zeros(&d, 0.0);
        for scheme in [NonlinearScheme::Newton, NonlinearScheme::SemiImplicit] {
            let cfg = NonlinearConfig { scheme, ..Default::default() };
            let n = step_kuznetsov(&s, &BoundaryData::zero(), &params(1.0), &cfg, 0.05, &d).unwrap();
            assert_eq!(n.u.max_abs(), 0.0);
            assert_eq!(n.v.max_abs(), 0.0);
        }
    }

    fn mode_problem(d: &Arc<Domain>, k: f64, amp: f64, dt: f64, t_end: f64) -> LinearProblem {
        let mut prob = LinearProblem::new(params(k), d.clone(), dt, t_end);
        prob.u0 = Field::from_fn(d, |x| amp * x.iter().map(|v| v.sin()).product::<f64>());
        prob.u1 = Field::from_fn(d, |x| -0.3 * amp * x.iter().map(|v| v.sin()).product::<f64>());
        prob.v0 = VectorField::from_fn(d, |x| x.iter().map(|v| 0.1 * amp * v.cos()).collect());
        prob
    }

    #[test]
    fn disabled_nonlinearity_matches_linear_solver() {
        let d = interval(40);
        let prob = mode_problem(&d, 1.0, 0.3, 0.01, 1.0);
        let cfg = NonlinearConfig {
            disable_nonlinearity: true,
            ..Default::default()
        };
        let a = run_kuznetsov(&prob, &cfg).unwrap();
        let b = solve_linear(&prob).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for (p, q) in x.u.values().iter().zip(y.u.values()) {
                assert!((p - q).abs() < 1e-9);
            }
            for (p, q) in x.v.component(0).values().iter().zip(y.v.component(0).values()) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn small_amplitude_close_to_linear() {
        let d = interval(40);
        let dev = |amp: f64| {
            let prob = mode_problem(&d, 1.0, amp, 0.01, 1.0);
            let a = run_kuznetsov(&prob, &NonlinearConfig::default()).unwrap();
            let b = solve_linear(&prob).unwrap();
            a.last().unwrap().u.values().iter().zip(b.last().unwrap().u.values()).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()))
        };
        let (d1, d2) = (dev(1e-3), dev(5e-4));
        assert!(d1 < 1e-5, "{d1}");
        let ratio = d1 / d2;
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for d in [interval(12), square(6)] {
            let n = d.n_nodes();
            let mut s = State::zeros(&d, 0.3);
            s.u = Field::from_fn(&d, |x| 0.2 * x.iter().map(|v| (v * 1.3).sin()).sum::<f64>());
            s.ut = Field::from_fn(&d, |x| 0.1 * x.iter().map(|v| v.cos()).sum::<f64>());
            s.v = VectorField::from_fn(&d, |x| x.iter().map(|v| 0.3 * (v + 0.2).sin()).collect());
            let g = BoundaryData::new(|t, x| 0.05 * (1.0 + t) * x[0]).with_rate(|_, x| 0.05 * x[0]);
            let stp = KuznetsovStepper::new(&d, PhysicalParams::new(1.2, 0.7, 0.8, 1.5).unwrap(), NonlinearConfig::default(), 0.05, None).unwrap();
            let ni = d.n_interior();
            let w: Vec<f64> = (0..ni).map(|i| 0.05 * (i as f64).sin()).collect();
            let jac = stp.jacobian(&s, &g, &w);
            let eps = 1e-6;
            let mut max_err: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for j in 0..ni {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += eps;
                wm[j] -= eps;
                let (rp, rm) = (stp.residual(&s, &g, &wp), stp.residual(&s, &g, &wm));
                for i in 0..ni {
                    let fd = (rp[i] - rm[i]) / (2.0 * eps);
                    max_err = max_err.max((fd - jac.get(i, j)).abs());
                    scale = scale.max(fd.abs());
                }
            }
            assert!(max_err / scale < 1e-6, "n = {n}: {max_err} / {scale}");
        }
    }

    #[test]
    fn schemes_agree_on_small_data() {
        let d = interval(40);
        let run = |scheme, dt| {
            let prob = mode_problem(&d, 1.0, 0.01, dt, 0.5);
            run_kuznetsov(&prob, &NonlinearConfig { scheme, ..Default::default() }).unwrap()
        };
        let diff = |a: &Trajectory, b: &Trajectory| {
            a.last().unwrap().u.values().iter().zip(b.last().unwrap().u.values()).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()))
        };
        let e1 = diff(&run(NonlinearScheme::Newton, 0.02), &run(NonlinearScheme::SemiImplicit, 0.02));
        let e2 = diff(&run(NonlinearScheme::Newton, 0.01), &run(NonlinearScheme::SemiImplicit, 0.01));
        assert!(e1 < 1e-6, "{e1}");
        assert!(e2 < e1);
    }

    #[test]
    fn degeneracy_at_start_keeps_initial_state() {
        let d = interval(16);
        let mut prob = mode_problem(&d, 1.0, 0.8, 0.01, 0.1);
        prob.validation = Validation::Permissive;
        let err = run_kuznetsov(&prob, &NonlinearConfig::default()).unwrap_err();
        assert!(matches!(err.source, Error::Degeneracy { t, .. } if t == 0.0));
        assert_eq!(err.partial.len(), 1);
    }

    #[test]
    fn guard_holds_on_accepted_steps() {
        let d = interval(32);
        let prob = mode_problem(&d, 1.0, 0.3, 0.01, 0.5);
        let traj = run_kuznetsov(&prob, &NonlinearConfig::default()).unwrap();
        assert!(traj.diagnostics.iter().all(|s| s.min_factor > 0.1));
        assert!(traj.diagnostics.iter().skip(1).all(|s| s.newton_iterations >= 1));
    }

    #[test]
    fn velocity_matches_gradient_of_time_integral() {
        // v(t) = v0 - ρ0⁻¹ ∇ ∫_0^t u ds, with the integral by trapezoid on samples
        let d = interval(32);
        let prob = mode_problem(&d, 1.0, 0.05, 0.01, 1.0);
        let traj = run_kuznetsov(&prob, &NonlinearConfig::default()).unwrap();
        let mut acc = Field::zeros(&d);
        for k in 1..traj.len() {
            acc.axpy(0.5 * 0.01, &traj.states[k - 1].u);
            acc.axpy(0.5 * 0.01, &traj.states[k].u);
            let mut expect = prob.v0.clone();
            expect.axpy(-1.0, &gradient(&acc, &d));
            let got = &traj.states[k].v;
            for (a, b) in got.component(0).values().iter().zip(expect.component(0).values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v_infinity_of_zero_and_injected() {
        let d = interval(200);
        let v0 = VectorField::from_fn(&d, |x| vec![x[0]]);
        let mut zero = Trajectory::new(0.1);
        for k in 0..10 {
            let mut s = State::zeros(&d, k as f64 * 0.1);
            s.v = v0.clone();
            zero.push(s, StepDiagnostics::measure(&State::zeros(&d, 0.0), &d, 0.0, 2.0, 0).unwrap());
        }
        let vi = v_infinity(&zero, &params(0.0), &d, 2.0).unwrap();
        assert_eq!(vi.v_inf, v0);

        let dt = 0.01;
        let mut inj = Trajectory::new(dt);
        for k in 0..=1000 {
            let t = k as f64 * dt;
            let mut s = State::zeros(&d, t);
            s.u = Field::from_fn(&d, |x| (-t).exp() * x[0].sin());
            inj.push(s.clone(), StepDiagnostics::measure(&s, &d, 0.0, 2.0, 0).unwrap());
        }
        let vi = v_infinity(&inj, &params(0.0), &d, 2.0).unwrap();
        for i in 0..d.n_nodes() {
            assert!((vi.v_inf.component(0).values()[i] + d.point(i)[0].cos()).abs() < 1e-3);
        }
        assert!((vi.omega_fit - 1.0).abs() < 1e-3);
        assert!(vi.tail_bound < 1e-4);

        let mut flat = Trajectory::new(0.1);
        for k in 0..10 {
            let mut s = State::zeros(&d, k as f64 * 0.1);
            s.u = Field::from_fn(&d, |x| x[0].sin());
            flat.push(s, StepDiagnostics::measure(&State::zeros(&d, 0.0), &d, 0.0, 2.0, 0).unwrap());
        }
        assert!(matches!(v_infinity(&flat, &params(0.0), &d, 2.0), Err(Error::NoLimit(_))));
    }
}
