//! Decay-rate fitting, data compatibility checks, time-derivative decay
//! reports, convergence and perturbation studies.

use serde::{Deserialize, Serialize};

use crate::domain::{discrete_norm, discrete_vector_norm, Domain, NormOrder};
use crate::error::{Error, Result};
use crate::linear_solver::{BoundaryData, Trajectory};
use crate::operators::{boundary_trace, Field, VectorField};

/// Least-squares fit of `log y = intercept - rate·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// RMS deviation of `log y` from the fitted line.
    pub residual: f64,
    pub valid: bool,
    /// Some samples were at or below the floor and were clipped.
    pub clipped: bool,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Explicit `[t_start, t_end]`; overrides `tail_fraction`.
    pub window: Option<(f64, f64)>,
    /// Fraction of the series (from the end) used when no window is given.
    pub tail_fraction: f64,
    /// Values at or below this are clipped to it and invalidate the fit.
    pub floor: f64,
    /// Largest admissible RMS log-residual of a valid fit.
    pub residual_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: None,
            tail_fraction: 0.6,
            floor: 1e-300,
            residual_cap: 2.0,
        }
    }
}

impl FitOptions {
    pub fn window(start: f64, end: f64) -> Self {
        Self {
            window: Some((start, end)),
            ..Default::default()
        }
    }
}

pub fn fit_decay_rate(times: &[f64], values: &[f64], options: FitOptions) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    if times.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    let (t0, t1) = match options.window {
        Some(w) => w,
        None => {
            let (first, last) = (times[0], times[times.len() - 1]);
            (last - options.tail_fraction * (last - first), last)
        }
    };
    if !(t0 < t1) {
        return Err(Error::invalid(format!("empty fit window [{t0}, {t1}]")));
    }
    let slack = 1e-9 * (t1 - t0);
    let mut clipped = false;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0 - slack && **t <= t1 + slack)
        .map(|(&t, &y)| {
            if !(y > options.floor) {
                clipped = true;
                (t, options.floor.ln())
            } else {
                (t, y.ln())
            }
        })
        .collect();
    if pts.len() < 4 {
        return Err(Error::invalid(format!("{} samples in fit window, need at least 4", pts.len())));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        rate: -slope,
        intercept,
        window: (t0, t1),
        residual,
        valid: !clipped && residual <= options.residual_cap && slope.is_finite(),
        clipped,
        samples: pts.len(),
    })
}

/// Boundary compatibility of the initial data at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    /// `g(0) = u0|Γ`.
    pub order0_ok: bool,
    /// `g_t(0) = u1|Γ`; checked only for `p > 3/2`.
    pub order1_ok: Option<bool>,
    pub p: f64,
    /// Largest nodal mismatch over the checks that were made.
    pub max_violation: f64,
    pub tolerance: f64,
}

impl CompatReport {
    pub fn ok(&self) -> bool {
        self.order0_ok && self.order1_ok.unwrap_or(true)
    }
}

/// Compares boundary traces at `t = 0`. The tolerance defaults to `10 h²`.
pub fn check_compatibility(
    g: &BoundaryData,
    u0: &Field,
    u1: &Field,
    p: f64,
    domain: &Domain,
    tolerance: Option<f64>,
) -> Result<CompatReport> {
    if (p - 1.5).abs() < 1e-12 {
        return Err(Error::UnsupportedExponent(p));
    }
    if !(p > 1.0) {
        return Err(Error::invalid(format!("need p > 1, got {p}")));
    }
    let h = domain.max_spacing();
    let tolerance = tolerance.unwrap_or(10.0 * h * h);
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let v0 = sup(&g.values(domain, 0.0), &boundary_trace(u0, domain));
    let mut max_violation = v0;
    let order1_ok = if p > 1.5 {
        let v1 = sup(&g.rates(domain, 0.0), &boundary_trace(u1, domain));
        max_violation = max_violation.max(v1);
        Some(v1 <= tolerance)
    } else {
        None
    };
    Ok(CompatReport {
        order0_ok: v0 <= tolerance,
        order1_ok,
        p,
        max_violation,
        tolerance,
    })
}

/// Smallest acceptable signal-to-roundoff ratio of a differenced series.
pub const MIN_DIFFERENCE_SNR: f64 = 1e3;

/// Fits for one time-derivative order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: usize,
    /// Fit of `‖∂_t^j u‖` in `W²_p`.
    pub u_fit: Option<RateFit>,
    /// Fit of `‖∂_t^j v‖` in `W¹_p`; absent for `j = 0`.
    pub v_fit: Option<RateFit>,
    /// Smallest signal-to-roundoff ratio of the difference quotient on the window.
    pub min_snr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub orders: Vec<OrderFit>,
    /// Highest order before the first one that falls under the roundoff floor;
    /// `None` when every order is reliable.
    pub degraded_after: Option<usize>,
}

impl DerivativeReport {
    pub fn degraded(&self) -> bool {
        self.degraded_after.is_some()
    }
}

/// Weights of the `j`-th central difference (unscaled by `dt^j`), centred on
/// offset `0`: repeated `[1, -2, 1]`, preceded by `[-½, 0, ½]` for odd `j`.
pub fn central_difference_weights(j: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    let convolve = |a: &[f64], b: &[f64]| {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (k, y) in b.iter().enumerate() {
                out[i + k] += x * y;
            }
        }
        out
    };
    if j % 2 == 1 {
        w = convolve(&w, &[-0.5, 0.0, 0.5]);
    }
    for _ in 0..j / 2 {
        w = convolve(&w, &[1.0, -2.0, 1.0]);
    }
    w
}

/// Decay rates of `∂_t^j u` (in `W²_p`) and `∂_t^j v` (in `W¹_p`) for
/// `j = 0..=j_max`, fitted on `[t_start, t_end]` from central differences of
/// the stored samples.
///
/// An order is degraded when the difference quotient is within
/// [`MIN_DIFFERENCE_SNR`] of its roundoff level somewhere on the window.
pub fn derivative_decay_report(
    trajectory: &Trajectory,
    domain: &Domain,
    j_max: usize,
    t_start: f64,
    p: f64,
) -> Result<DerivativeReport> {
    if !(t_start > 0.0) {
        return Err(Error::invalid("t_start must be positive"));
    }
    let states = &trajectory.states;
    let dt = trajectory.dt;
    let n = states.len();
    let t_end = match states.last() {
        Some(s) => s.t,
        None => return Err(Error::invalid("empty trajectory")),
    };
    let w2 = NormOrder::new(p, 2)?;
    let w1 = NormOrder::new(p, 1)?;
    let start = states.iter().position(|s| s.t >= t_start - 1e-9 * dt).unwrap_or(n);
    let base_u = states[start.min(n - 1)..]
        .iter()
        .map(|s| discrete_norm(&s.u, domain, w2))
        .collect::<Result<Vec<_>>>()?;
    let mut orders = Vec::new();
    let mut degraded_after = None;
    for j in 0..=j_max {
        let weights = central_difference_weights(j);
        let r = weights.len() / 2;
        let scale = dt.powi(j as i32);
        let abs_sum: f64 = weights.iter().map(|w| w.abs()).sum();
        let (mut times, mut un, mut vn) = (Vec::new(), Vec::new(), Vec::new());
        let mut min_snr = f64::INFINITY;
        for k in start.max(r)..n.saturating_sub(r) {
            let mut du = Field::zeros(domain);
            let mut dv = VectorField::zeros(domain);
            for (m, &wt) in weights.iter().enumerate() {
                if wt != 0.0 {
                    let s = &states[k + m - r];
                    du.axpy(wt / scale, &s.u);
                    dv.axpy(wt / scale, &s.v);
                }
            }
            let nu = discrete_norm(&du, domain, w2)?;
            if j > 0 {
                let local = (k - r..=k + r)
                    .filter_map(|i| i.checked_sub(start).and_then(|q| base_u.get(q)))
                    .fold(0.0_f64, |a, &b| a.max(b));
                let noise = f64::EPSILON * abs_sum * local / scale;
                if noise > 0.0 {
                    min_snr = min_snr.min(nu / noise);
                }
            }
            times.push(states[k].t);
            un.push(nu);
            vn.push(discrete_vector_norm(&dv, domain, w1)?);
        }
        let fit = |vals: &[f64]| -> Option<RateFit> {
            fit_decay_rate(&times, vals, FitOptions::window(t_start, t_end)).ok()
        };
        // v itself tends to v_∞, not to zero
        let (u_fit, v_fit) = (fit(&un), if j == 0 { None } else { fit(&vn) });
        if degraded_after.is_none() && j > 0 && min_snr < MIN_DIFFERENCE_SNR {
            degraded_after = Some(j - 1);
        }
        orders.push(OrderFit {
            order: j,
            u_fit,
            v_fit,
            min_snr,
        });
    }
    Ok(DerivativeReport { orders, degraded_after })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(refinement parameter, error)` from coarse to fine.
    pub table: Vec<(f64, f64)>,
    /// Observed order between consecutive levels.
    pub orders: Vec<f64>,
    /// All errors at the roundoff floor: orders are meaningless.
    pub saturated: bool,
}

/// Errors below this are treated as exact.
pub const SATURATION_FLOOR: f64 = 1e-11;

/// Observed orders `ln(e_i/e_{i+1}) / ln(p_i/p_{i+1})` of an error measured
/// at decreasing refinement parameters `levels`.
pub fn convergence_study(levels: &[f64], mut error_at: impl FnMut(f64) -> Result<f64>) -> Result<ConvergenceReport> {
    if levels.len() < 2 {
        return Err(Error::invalid("need at least two refinement levels"));
    }
    if levels.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("refinement levels must decrease"));
    }
    let mut table = Vec::new();
    for &h in levels {
        table.push((h, error_at(h)?));
    }
    if table.iter().all(|&(_, e)| e <= SATURATION_FLOOR) {
        return Ok(ConvergenceReport {
            table,
            orders: Vec::new(),
            saturated: true,
        });
    }
    if table.windows(2).any(|w| !(w[1].1 < w[0].1)) {
        return Err(Error::StudyInvalid {
            reason: "errors do not decrease under refinement".into(),
            table,
        });
    }
    let orders = table
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    Ok(ConvergenceReport {
        table,
        orders,
        saturated: false,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub delta: f64,
    /// `max_t ‖u_δ - u_0‖_{L_p} / δ`, absent if the perturbed run failed.
    pub ratio: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub rows: Vec<PerturbationRow>,
}

impl PerturbationReport {
    /// `(max - min) / max` over the successful ratios.
    pub fn spread(&self) -> Option<f64> {
        let r: Vec<f64> = self.rows.iter().filter_map(|r| r.ratio).collect();
        if r.is_empty() {
            return None;
        }
        let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(if hi > 0.0 { (hi - lo) / hi } else { 0.0 })
    }
}

/// Difference quotients of the solution map: `solve(δ)` solves with data
/// `base + δ·direction`; `solve(0)` is the base run, which must succeed.
pub fn perturbation_study(
    deltas: &[f64],
    domain: &Domain,
    p: f64,
    mut solve: impl FnMut(f64) -> Result<Trajectory>,
) -> Result<PerturbationReport> {
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::invalid("perturbation sizes must be positive"));
    }
    let order = NormOrder::lp(p)?;
    let base = solve(0.0)?;
    let mut rows = Vec::new();
    for &delta in deltas {
        let row = match solve(delta) {
            Ok(traj) => {
                let mut worst: f64 = 0.0;
                for (a, b) in traj.states.iter().zip(&base.states) {
                    let mut diff = a.u.clone();
                    diff.axpy(-1.0, &b.u);
                    worst = worst.max(discrete_norm(&diff, domain, order)?);
                }
                PerturbationRow {
                    delta,
                    ratio: Some(worst / delta),
                    failure: None,
                }
            }
            Err(e) => PerturbationRow {
                delta,
                ratio: None,
                failure: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(PerturbationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Geometry, PhysicalParams};
    use crate::linear_solver::{solve_linear, LinearProblem, State, StepDiagnostics};
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn series(f: impl Fn(f64) -> f64, t_end: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
        let y = t.iter().map(|&t| f(t)).collect();
        (t, y)
    }

    fn interval(n: usize) -> Arc<Domain> {
        Arc::new(Domain::new(Geometry::Interval { start: 0.0, length: PI }, &[n]).unwrap())
    }

    #[test]
    fn fit_examples() {
        let (t, y) = series(|t| 3.0 * (-0.5 * t).exp(), 10.0, 100);
        let f = fit_decay_rate(&t, &y, FitOptions::default()).unwrap();
        assert!((f.rate - 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(f.residual < 1e-12 && f.valid);
        assert_eq!(f.window, (4.0, 10.0));

        let (t, y) = series(|t| (-0.3 * t).exp() * (2.0 + (5.0 * t).cos()), 30.0, 3000);
        let f = fit_decay_rate(&t, &y, FitOptions::window(5.0, 30.0)).unwrap();
        assert!((f.rate - 0.3).abs() < 0.05, "{}", f.rate);

        let (t, y) = series(|_| 2.0, 5.0, 50);
        assert!(fit_decay_rate(&t, &y, FitOptions::default()).unwrap().rate.abs() < 1e-14);
    }

    #[test]
    fn fit_rejects_short_windows_and_flags_zeros() {
        let (t, y) = series(|t| (-t).exp(), 1.0, 10);
        assert!(matches!(fit_decay_rate(&t, &y, FitOptions::window(0.0, 0.25)), Err(Error::InvalidArgument(_))));
        let z = vec![0.0; t.len()];
        let f = fit_decay_rate(&t, &z, FitOptions::default()).unwrap();
        assert!(f.clipped && !f.valid);
    }

    proptest! {
        #[test]
        fn fit_exact_and_scale_invariant(rate in -2.0f64..3.0, amp in 1e-3f64..1e3, s in 1e-4f64..1e4) {
            let (t, y) = series(|t| amp * (-rate * t).exp(), 8.0, 80);
            let ys: Vec<f64> = y.iter().map(|v| s * v).collect();
            let a = fit_decay_rate(&t, &y, FitOptions::default()).unwrap();
            let b = fit_decay_rate(&t, &ys, FitOptions::default()).unwrap();
            prop_assert!((a.rate - rate).abs() < 1e-10);
            prop_assert!(a.residual <= 1e-12);
            prop_assert!((a.rate - b.rate).abs() < 1e-10);
            prop_assert!((b.intercept - a.intercept - s.ln()).abs() < 1e-9);
        }

        #[test]
        fn compat_cancels_equal_shifts(shift in -2.0f64..2.0) {
            let d = interval(16);
            let g = BoundaryData::new(move |_, x| shift + 0.1 * x[0]);
            let u0 = Field::from_fn(&d, |x| shift + 0.1 * x[0]);
            let r = check_compatibility(&g, &u0, &Field::zeros(&d), 2.0, &d, None).unwrap();
            prop_assert!(r.ok());
            prop_assert!(r.max_violation < 1e-12);
        }
    }

    #[test]
    fn compat_examples() {
        let d = interval(16);
        let z = Field::zeros(&d);
        let r = check_compatibility(&BoundaryData::zero(), &z, &z, 2.0, &d, None).unwrap();
        assert!(r.order0_ok && r.order1_ok == Some(true));
        let one = BoundaryData::new(|_, _| 1.0);
        let r = check_compatibility(&one, &z, &z, 2.0, &d, None).unwrap();
        assert!(!r.order0_ok);
        assert_eq!(r.max_violation, 1.0);
        let r = check_compatibility(&BoundaryData::zero(), &z, &z, 1.4, &d, None).unwrap();
        assert_eq!(r.order1_ok, None);
        assert!(matches!(
            check_compatibility(&BoundaryData::zero(), &z, &z, 1.5, &d, None),
            Err(Error::UnsupportedExponent(_))
        ));
        // a rate mismatch matters only above 3/2
        let ramp = BoundaryData::new(|t, _| t);
        assert!(!check_compatibility(&ramp, &z, &z, 2.0, &d, None).unwrap().ok());
        assert!(check_compatibility(&ramp, &z, &z, 1.2, &d, None).unwrap().ok());
    }

    #[test]
    fn difference_weights() {
        assert_eq!(central_difference_weights(0), vec![1.0]);
        assert_eq!(central_difference_weights(1), vec![-0.5, 0.0, 0.5]);
        assert_eq!(central_difference_weights(2), vec![1.0, -2.0, 1.0]);
        assert_eq!(central_difference_weights(3), vec![-0.5, 1.0, 0.0, -1.0, 0.5]);
        // exact on t^j / j!
        for j in 0..6 {
            let w = central_difference_weights(j);
            let r = (w.len() / 2) as f64;
            let fact: f64 = (1..=j).map(|k| k as f64).product();
            let d: f64 = w.iter().enumerate().map(|(m, c)| c * (m as f64 - r).powi(j as i32) / fact).sum();
            assert!((d - 1.0).abs() < 1e-12, "j={j}: {d}");
        }
    }

    fn mode1(d: &Arc<Domain>, dt: f64, t_end: f64) -> Trajectory {
        let p = PhysicalParams::default();
        let mut prob = LinearProblem::new(p, d.clone(), dt, t_end);
        prob.u0 = Field::from_fn(d, |x| x[0].sin());
        solve_linear(&prob).unwrap()
    }

    #[test]
    fn derivative_report_on_mode_one() {
        let d = interval(32);
        let traj = mode1(&d, 0.02, 20.0);
        let rep = derivative_decay_report(&traj, &d, 2, 2.0, 2.0).unwrap();
        assert!(!rep.degraded());
        for o in &rep.orders {
            let f = o.u_fit.unwrap();
            assert!((f.rate - 0.5).abs() < 0.05, "order {}: {}", o.order, f.rate);
        }
    }

    #[test]
    fn derivative_report_detects_roundoff() {
        let d = interval(16);
        let traj = mode1(&d, 1e-4, 0.05);
        let rep = derivative_decay_report(&traj, &d, 4, 0.01, 2.0).unwrap();
        assert!(rep.degraded_after.is_some_and(|j| j < 4), "{:?}", rep.degraded_after);
    }

    #[test]
    fn derivative_report_zero_trajectory() {
        let d = interval(16);
        let mut traj = Trajectory::new(0.1);
        for k in 0..50 {
            let s = State::zeros(&d, k as f64 * 0.1);
            let diag = StepDiagnostics::measure(&s, &d, 0.0, 2.0, 0).unwrap();
            traj.push(s, diag);
        }
        let rep = derivative_decay_report(&traj, &d, 2, 1.0, 2.0).unwrap();
        assert!(rep.orders.iter().all(|o| !o.u_fit.unwrap().valid));
    }

    #[test]
    fn convergence_examples() {
        let r = convergence_study(&[0.1, 0.05, 0.025], |h| Ok(3.0 * h * h)).unwrap();
        assert!(r.orders.iter().all(|o| (o - 2.0).abs() < 1e-12));
        let s = convergence_study(&[0.1, 0.05], |_| Ok(1e-14)).unwrap();
        assert!(s.saturated);
        match convergence_study(&[0.1, 0.05, 0.025], |h| Ok(if h < 0.03 { 1.0 } else { h })) {
            Err(Error::StudyInvalid { table, .. }) => assert_eq!(table.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perturbation_linear_is_delta_independent() {
        let d = interval(24);
        let base = {
            let mut p = LinearProblem::new(PhysicalParams::default(), d.clone(), 0.01, 0.5);
            p.u0 = Field::from_fn(&d, |x| x[0].sin());
            p
        };
        let rep = perturbation_study(&[1e-2, 1e-3, 1e-4], &d, 2.0, |delta| {
            let mut p = base.clone();
            p.u1 = Field::from_fn(&d, |x| delta * (2.0 * x[0]).sin());
            solve_linear(&p)
        })
        .unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio.unwrap() > 0.0));
        assert!(rep.spread().unwrap() < 1e-8);
    }
}
