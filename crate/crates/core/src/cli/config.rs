//! Scenario configuration (TOML) and its translation into a solvable problem.
//!
//! Every field has a default, so an empty file describes a zero-data run on
//! `(0, π)` with 64 cells.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{analytic_lambda0, omega0, Domain, Geometry, PhysicalParams};
use crate::error::{Error, Result};
use crate::linear_solver::{BoundaryData, LinearProblem, ModalRoots, TimeScheme, Validation};
use crate::nonlinear_solver::NonlinearConfig;
use crate::operators::{Field, VectorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Used for the output directory and in the summary.
    pub name: String,
    /// Seed of every randomized data construction.
    pub seed: u64,
    pub grid: GridSpec,
    pub params: PhysicalParams,
    pub data: DataSpec,
    pub solver: SolverSpec,
    pub diagnostics: DiagnosticsSpec,
    pub study: StudySpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            grid: GridSpec::default(),
            params: PhysicalParams::default(),
            data: DataSpec::default(),
            solver: SolverSpec::default(),
            diagnostics: DiagnosticsSpec::default(),
            study: StudySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub geometry: Geometry,
    /// Cells per axis; across the diameter for the disk.
    pub cells: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            geometry: Geometry::Interval { start: 0.0, length: PI },
            cells: vec![64],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// `u_tt - c²Δu - bΔu_t = 0` only.
    Linear,
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub model: Model,
    pub dt: f64,
    pub t_end: f64,
    pub time_scheme: TimeScheme,
    pub record_every: usize,
    pub validation: Validation,
    /// Compatibility tolerance; `10 h²` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compat_tol: Option<f64>,
    pub nonlinear: NonlinearConfig,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            model: Model::Nonlinear,
            dt: 0.01,
            t_end: 1.0,
            time_scheme: TimeScheme::Trapezoidal,
            record_every: 1,
            validation: Validation::Strict,
            compat_tol: None,
            nonlinear: NonlinearConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Lebesgue exponent of all reported norms.
    pub p: f64,
    /// Explicit rate-fit window; the last `tail_fraction` of the run otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    pub tail_fraction: f64,
    /// `‖v - v_∞‖` is fitted only up to this fraction of `t_end`, where the
    /// finite integration horizon does not yet distort it.
    pub vinf_fit_end_fraction: f64,
    /// Highest time-derivative order of the decay report.
    pub j_max: usize,
    /// Start of the derivative-decay window; after the boundary switch-off
    /// (plus ½) or at `0.4 t_end` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative_start: Option<f64>,
    /// Fitted rates must reach `rate_margin · ω0`.
    pub rate_margin: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            p: 2.0,
            fit_window: None,
            tail_fraction: 0.6,
            vinf_fit_end_fraction: 0.75,
            j_max: 2,
            derivative_start: None,
            rate_margin: 0.9,
        }
    }
}

/// A Dirichlet eigenfunction (radial on the disk). `index` has one entry per
/// axis on lattices; missing entries default to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub index: Vec<usize>,
    pub coeff: f64,
}

impl ModeSpec {
    pub fn new(index: usize, coeff: f64) -> Self {
        Self { index: vec![index], coeff }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSpec {
    /// Modes `1..=modes` get coefficients uniform in `[-1, 1]`.
    pub modes: usize,
    /// Also draw random `u1` coefficients (otherwise `u1` follows
    /// `slow_eigen_u1` or is zero).
    pub u1: bool,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { modes: 5, u1: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct VelocitySpec {
    /// Constant vector added to `v0`.
    pub uniform: Vec<f64>,
    /// `v0 += coeff · ∇φ_m`.
    pub gradient_modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeProfile {
    /// `e^{-rate·t} (c0 + c1 t + c2 t²)`.
    Exponential { rate: f64, c0: f64, c1: f64, c2: f64 },
    /// `exp(1 - 1/(1 - s²))`, `s = 2t/end - 1`, on `(0, end)` and zero elsewhere.
    Bump { end: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Exponential { rate, c0, c1, c2 } => (-rate * t).exp() * (c0 + t * (c1 + t * c2)),
            TimeProfile::Bump { end } => {
                let s = 2.0 * t / end - 1.0;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                }
            }
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Exponential { rate, c0, c1, c2 } => {
                let poly = c0 + t * (c1 + t * c2);
                (-rate * t).exp() * (c1 + 2.0 * c2 * t - rate * poly)
            }
            TimeProfile::Bump { end } => {
                let s = 2.0 * t / end - 1.0;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    let q = 1.0 - s * s;
                    self.value(t) * (-2.0 * s / (q * q)) * (2.0 / end)
                }
            }
        }
    }

    pub fn support_end(&self) -> Option<f64> {
        match *self {
            TimeProfile::Bump { end } => Some(end),
            TimeProfile::Exponential { .. } => None,
        }
    }
}

/// `g(t, x) = amplitude · coeff · φ(t) · (constant + slope·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    pub coeff: f64,
    pub profile: TimeProfile,
    pub constant: f64,
    pub slope: Vec<f64>,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            coeff: 1.0,
            profile: TimeProfile::Exponential {
                rate: 1.0,
                c0: 1.0,
                c1: 0.0,
                c2: 0.0,
            },
            constant: 1.0,
            slope: Vec::new(),
        }
    }
}

impl BoundarySpec {
    fn spatial(&self, x: &[f64]) -> f64 {
        self.constant + self.slope.iter().zip(x).map(|(s, x)| s * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Common scale of all data.
    pub amplitude: f64,
    pub u0_modes: Vec<ModeSpec>,
    pub u1_modes: Vec<ModeSpec>,
    /// Adds `μ_slow(m) · coeff` of every `u0` mode to `u1`, so that only the
    /// slow root of each mode is excited (real part of the root when complex).
    pub slow_eigen_u1: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSpec>,
    pub v0: VelocitySpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySpec>,
    /// Extend `g(0)` into `u0` so that `g(0) = u0|Γ` holds exactly.
    pub match_boundary: bool,
    /// Extend `g_t(0)` into `u1` so that `g_t(0) = u1|Γ` holds exactly.
    pub match_boundary_rate: bool,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            u0_modes: Vec::new(),
            u1_modes: Vec::new(),
            slow_eigen_u1: false,
            random: None,
            v0: VelocitySpec::default(),
            boundary: None,
            match_boundary: true,
            match_boundary_rate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Refine {
    /// Levels are time steps.
    #[default]
    Dt,
    /// Levels are cell counts per axis.
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Oracle {
    /// Exact modal solution (interval, zero boundary data).
    #[default]
    Modal,
    /// The initial state is an exact steady solution.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSpec {
    pub refine: Refine,
    pub oracle: Oracle,
    pub levels: Vec<f64>,
    /// Cells when refining `dt`.
    pub fixed_cells: usize,
    /// Time step when refining cells.
    pub fixed_dt: f64,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        Self {
            refine: Refine::Dt,
            oracle: Oracle::Modal,
            levels: vec![0.1, 0.05, 0.025, 0.0125],
            fixed_cells: 2000,
            fixed_dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbTarget {
    U0,
    #[default]
    U1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    pub deltas: Vec<f64>,
    pub target: PerturbTarget,
    /// Direction `φ_mode` (unscaled by `amplitude`).
    pub mode: ModeSpec,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            deltas: vec![1e-2, 1e-3, 1e-4],
            target: PerturbTarget::U1,
            mode: ModeSpec::new(1, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftSpec {
    /// Upper limit of the truncated tail integral.
    pub t_max: f64,
    pub tail_tol: f64,
}

impl Default for LiftSpec {
    fn default() -> Self {
        Self { t_max: 20.0, tail_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    /// Modes whose decay rate is measured one at a time against the modal roots.
    pub mode_table: Vec<usize>,
    /// Amplitudes of a decay scan; each run also reports its deviation from
    /// the linear solution with the same data.
    pub amplitudes: Vec<f64>,
    pub converge: ConvergeSpec,
    pub perturb: PerturbSpec,
    pub lifting: LiftSpec,
}

/// Resolved single-mode content of the initial data: `(index, a, β)` with
/// `u0 ∋ a φ`, `u1 ∋ β φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalData {
    pub index: Vec<usize>,
    pub lambda: f64,
    pub a: f64,
    pub beta: f64,
}

/// A configuration turned into solver input.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub problem: LinearProblem,
    pub lambda0: f64,
    pub omega0: f64,
    pub modes: Vec<ModalData>,
}

impl Scenario {
    pub fn domain(&self) -> &Arc<Domain> {
        &self.problem.domain
    }

    pub fn nonlinear(&self) -> Option<NonlinearConfig> {
        match self.config.solver.model {
            Model::Linear => None,
            Model::Nonlinear => Some(self.config.solver.nonlinear),
        }
    }

    /// Exact solution `Σ α_m(t) φ_m` of the linear problem when the data are
    /// modal and the boundary data vanish.
    pub fn modal_solution(&self, t: f64) -> Result<Field> {
        if self.config.data.boundary.is_some() {
            return Err(Error::invalid("modal oracle needs zero boundary data"));
        }
        let geometry = self.config.grid.geometry;
        let d = self.domain();
        let mut out = Field::zeros(d);
        for m in &self.modes {
            let (alpha, _) = ModalRoots::new(&self.problem.params, m.lambda).evolve(m.a, m.beta, t);
            let mode = Mode::new(&geometry, &m.index)?;
            out.axpy(alpha, &Field::from_fn(d, |x| mode.value(x)));
        }
        Ok(out)
    }
}

/// Dirichlet eigenfunction `φ` of the geometry with `-Δφ = λφ`.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    kind: ModeKind,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
enum ModeKind {
    Interval { start: f64, k: f64 },
    Rectangle { kx: f64, ky: f64 },
    Disk { k: f64 },
}

impl Mode {
    pub fn new(geometry: &Geometry, index: &[usize]) -> Result<Self> {
        let idx = |a: usize| index.get(a).copied().unwrap_or(1);
        if index.is_empty() || index.len() > geometry.dim() || index.contains(&0) {
            return Err(Error::invalid(format!("bad mode index {index:?} for {geometry:?}")));
        }
        Ok(match *geometry {
            Geometry::Interval { start, length } => {
                let k = idx(0) as f64 * PI / length;
                Self {
                    kind: ModeKind::Interval { start, k },
                    lambda: k * k,
                }
            }
            Geometry::Rectangle { lx, ly } => {
                let (kx, ky) = (idx(0) as f64 * PI / lx, idx(1) as f64 * PI / ly);
                Self {
                    kind: ModeKind::Rectangle { kx, ky },
                    lambda: kx * kx + ky * ky,
                }
            }
            Geometry::Disk { radius } => {
                let k = bessel_j0_zero(idx(0)) / radius;
                Self {
                    kind: ModeKind::Disk { k },
                    lambda: k * k,
                }
            }
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModeKind::Interval { start, k } => (k * (x[0] - start)).sin(),
            ModeKind::Rectangle { kx, ky } => (kx * x[0]).sin() * (ky * x[1]).sin(),
            ModeKind::Disk { k } => bessel_j0(k * x[0].hypot(x[1])),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ModeKind::Interval { start, k } => vec![k * (k * (x[0] - start)).cos()],
            ModeKind::Rectangle { kx, ky } => vec![
                kx * (kx * x[0]).cos() * (ky * x[1]).sin(),
                ky * (kx * x[0]).sin() * (ky * x[1]).cos(),
            ],
            ModeKind::Disk { k } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    return vec![0.0, 0.0];
                }
                // J0' = -J1
                let dr = -k * bessel_j1(k * r);
                vec![dr * x[0] / r, dr * x[1] / r]
            }
        }
    }
}

/// Power series; accurate to ~1e-12 for the arguments used here (|x| < 20).
fn bessel_j0(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..80 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn bessel_j1(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = x / 2.0;
    let mut sum = term;
    for k in 1..80 {
        term *= q / (k * (k + 1)) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `m`-th positive zero of J0 by bisection around McMahon's estimate.
fn bessel_j0_zero(m: usize) -> f64 {
    let guess = (m as f64 - 0.25) * PI;
    let (mut lo, mut hi) = (guess - 0.5, guess + 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_j0(lo) * bessel_j0(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn build(&self) -> Result<Scenario> {
        let geometry = self.grid.geometry;
        let domain = Arc::new(Domain::new(geometry, &self.grid.cells)?);
        self.build_on(domain)
    }

    /// As [`Self::build`], on a given discretization of the same geometry.
    pub fn build_on(&self, domain: Arc<Domain>) -> Result<Scenario> {
        let geometry = self.grid.geometry;
        let params = self.params;
        params.validate()?;
        let s = &self.solver;
        let data = &self.data;
        let amp = data.amplitude;
        let d = &domain;

        // (index, a, β) before scaling by the amplitude
        let mut modal: Vec<(Vec<usize>, f64, f64)> = Vec::new();
        let mut add = |index: &[usize], a: f64, beta: f64| match modal.iter_mut().find(|m| m.0 == index) {
            Some(m) => {
                m.1 += a;
                m.2 += beta;
            }
            None => modal.push((index.to_vec(), a, beta)),
        };
        for m in &data.u0_modes {
            add(&m.index, m.coeff, 0.0);
        }
        for m in &data.u1_modes {
            add(&m.index, 0.0, m.coeff);
        }
        if let Some(r) = &data.random {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for m in 1..=r.modes {
                let a = rng.gen_range(-1.0..=1.0);
                let beta = if r.u1 { rng.gen_range(-1.0..=1.0) } else { 0.0 };
                add(&[m], a, beta);
            }
        }
        let mut modes = Vec::new();
        for (index, a, mut beta) in modal {
            let mode = Mode::new(&geometry, &index)?;
            if data.slow_eigen_u1 {
                let slow = -ModalRoots::new(&params, mode.lambda).slow_rate();
                beta += slow * a;
            }
            modes.push(ModalData {
                index,
                lambda: mode.lambda,
                a: amp * a,
                beta: amp * beta,
            });
        }

        let mut u0 = Field::zeros(d);
        let mut u1 = Field::zeros(d);
        for m in &modes {
            let mode = Mode::new(&geometry, &m.index)?;
            let phi = Field::from_fn(d, |x| mode.value(x));
            u0.axpy(m.a, &phi);
            u1.axpy(m.beta, &phi);
        }
        let mut v0 = VectorField::zeros(d);
        if !data.v0.uniform.is_empty() {
            if data.v0.uniform.len() != d.dim() {
                return Err(Error::invalid("v0.uniform needs one entry per axis"));
            }
            let uni = data.v0.uniform.clone();
            v0.axpy(amp, &VectorField::from_fn(d, |_| uni.clone()));
        }
        for m in &data.v0.gradient_modes {
            let mode = Mode::new(&geometry, &m.index)?;
            v0.axpy(amp * m.coeff, &VectorField::from_fn(d, |x| mode.gradient(x)));
        }

        let g = match &data.boundary {
            None => BoundaryData::zero(),
            Some(b) => {
                if !b.slope.is_empty() && b.slope.len() != d.dim() {
                    return Err(Error::invalid("boundary.slope needs one entry per axis"));
                }
                let scale = amp * b.coeff;
                let (b1, b2) = (b.clone(), b.clone());
                let mut g = BoundaryData::new(move |t, x| scale * b1.profile.value(t) * b1.spatial(x))
                    .with_rate(move |t, x| scale * b2.profile.rate(t) * b2.spatial(x));
                if let Some(end) = b.profile.support_end() {
                    g = g.with_support_end(end);
                }
                if data.match_boundary {
                    u0.axpy(scale * b.profile.value(0.0), &Field::from_fn(d, |x| b.spatial(x)));
                }
                if data.match_boundary_rate {
                    u1.axpy(scale * b.profile.rate(0.0), &Field::from_fn(d, |x| b.spatial(x)));
                }
                g
            }
        };

        let mut problem = LinearProblem::new(params, domain.clone(), s.dt, s.t_end);
        problem.u0 = u0;
        problem.u1 = u1;
        problem.v0 = v0;
        problem.g = g;
        problem.scheme = s.time_scheme;
        problem.record_every = s.record_every;
        problem.norm_p = self.diagnostics.p;
        problem.validation = s.validation;
        problem.compat_tol = s.compat_tol;
        let lambda0 = analytic_lambda0(&geometry);
        Ok(Scenario {
            config: self.clone(),
            omega0: omega0(&params, lambda0)?,
            lambda0,
            problem,
            modes,
        })
    }

    /// Start of derivative-decay fits.
    pub fn derivative_start(&self) -> f64 {
        if let Some(t) = self.diagnostics.derivative_start {
            return t;
        }
        match self.data.boundary.as_ref().and_then(|b| b.profile.support_end()) {
            Some(end) => end + 0.5,
            None => 0.4 * self.solver.t_end,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let c = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        let s = c.build().unwrap();
        assert_eq!(s.problem.u0.max_abs(), 0.0);
        assert_eq!(s.omega0, 0.5);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ScenarioConfig::default();
        c.data.amplitude = 0.3;
        c.data.u0_modes.push(ModeSpec::new(2, -1.0));
        c.data.random = Some(RandomSpec::default());
        c.data.boundary = Some(BoundarySpec {
            profile: TimeProfile::Bump { end: 1.0 },
            slope: vec![0.5],
            ..Default::default()
        });
        c.diagnostics.fit_window = Some([1.0, 2.0]);
        let text = c.to_toml();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), c);
        assert!(ScenarioConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn profiles_have_consistent_rates() {
        let profiles = [
            TimeProfile::Exponential {
                rate: 1.3,
                c0: 1.0,
                c1: -0.4,
                c2: 0.2,
            },
            TimeProfile::Bump { end: 1.0 },
        ];
        for p in profiles {
            for t in [0.1, 0.3, 0.5, 0.77] {
                let e = 1e-6;
                let fd = (p.value(t + e) - p.value(t - e)) / (2.0 * e);
                assert!((fd - p.rate(t)).abs() < 1e-7, "{p:?} t={t}");
            }
        }
        let b = TimeProfile::Bump { end: 1.0 };
        assert_eq!(b.value(0.0), 0.0);
        assert_eq!(b.rate(0.0), 0.0);
        assert_eq!(b.value(1.2), 0.0);
        assert!((b.value(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn modes_are_eigenfunctions() {
        let geos = [
            (Geometry::Interval { start: 0.5, length: 2.0 }, vec![3]),
            (Geometry::Rectangle { lx: 1.0, ly: 2.0 }, vec![2, 1]),
            (Geometry::Disk { radius: 1.5 }, vec![2]),
        ];
        for (g, idx) in geos {
            let m = Mode::new(&g, &idx).unwrap();
            let x: Vec<f64> = match g {
                Geometry::Interval { .. } => vec![1.1],
                _ => vec![0.31, 0.42],
            };
            // -Δφ = λφ and ∇φ by central differences
            let e = 1e-4;
            let mut lap = 0.0;
            for a in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[a] += e;
                xm[a] -= e;
                lap += (m.value(&xp) - 2.0 * m.value(&x) + m.value(&xm)) / (e * e);
                let fd = (m.value(&xp) - m.value(&xm)) / (2.0 * e);
                assert!((fd - m.gradient(&x)[a]).abs() < 1e-6);
            }
            assert!((-lap - m.lambda * m.value(&x)).abs() < 1e-4 * m.lambda, "{g:?}");
        }
        assert!((bessel_j0_zero(1) - crate::domain::BESSEL_J0_FIRST_ZERO).abs() < 1e-12);
        assert!(Mode::new(&Geometry::Interval { start: 0.0, length: 1.0 }, &[0]).is_err());
    }

    #[test]
    fn seeded_random_data_is_reproducible() {
        let mut c = ScenarioConfig::default();
        c.data.amplitude = 1.0;
        c.data.random = Some(RandomSpec { modes: 4, u1: true });
        c.seed = 7;
        let a = c.build().unwrap();
        let b = c.build().unwrap();
        assert_eq!(a.problem.u0, b.problem.u0);
        assert_eq!(a.problem.u1, b.problem.u1);
        c.seed = 8;
        assert_ne!(c.build().unwrap().problem.u0, a.problem.u0);
    }

    #[test]
    fn matched_boundary_data_is_compatible() {
        let mut c = ScenarioConfig::default();
        c.data.amplitude = 0.1;
        c.data.boundary = Some(BoundarySpec {
            slope: vec![0.3],
            ..Default::default()
        });
        let s = c.build().unwrap();
        assert!(s.problem.validate().is_ok());
        c.data.match_boundary = false;
        assert!(matches!(c.build().unwrap().problem.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn slow_eigen_data_excites_one_root() {
        let mut c = ScenarioConfig::default();
        c.data.amplitude = 2.0;
        c.data.u0_modes = vec![ModeSpec::new(3, 1.0)];
        c.data.slow_eigen_u1 = true;
        let s = c.build().unwrap();
        let m = &s.modes[0];
        assert!((m.beta / m.a + 1.145_898_033_750_315_5).abs() < 1e-12);
    }
}
