//! Geometry, physical constants, principal Dirichlet eigenvalues and discrete
//! Sobolev-type norms.
//!
//! A [`Domain`] is a Cartesian lattice restricted to the physical region. Node
//! indices `0..n_interior` are the unknowns of every solve (ordered row-major so
//! the assembled operators are banded), and `n_interior..n_nodes` carry
//! Dirichlet data. Each node stores, per axis, its nearest neighbours ("arms")
//! together with their distance; all stencils are built from these arms, so the
//! uniform lattices (interval, rectangle) and the embedded-boundary disk share
//! one code path.

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::operators::{self, DirichletOperator, Field};

/// First positive zero of the Bessel function J0.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Physical constants of the Kuznetsov model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Sound speed.
    pub c: f64,
    /// Diffusivity of sound (strong damping coefficient).
    pub b: f64,
    /// Parameter of nonlinearity; `k = 0` is the linear limit.
    pub k: f64,
    /// Ambient density.
    pub rho0: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            b: 1.0,
            k: 0.0,
            rho0: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn new(c: f64, b: f64, k: f64, rho0: f64) -> Result<Self> {
        let p = Self { c, b, k, rho0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.c, self.b, self.k, self.rho0].iter().all(|v| v.is_finite());
        if !finite || self.c <= 0.0 || self.b <= 0.0 || self.rho0 <= 0.0 || self.k < 0.0 {
            return Err(Error::invalid(format!(
                "physical parameters need c > 0, b > 0, rho0 > 0, k >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Exponential decay threshold `min{b λ0 / 2, c² / b}`.
pub fn omega0(params: &PhysicalParams, lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(Error::invalid(format!("lambda0 must be positive, got {lambda0}")));
    }
    Ok((params.b * lambda0 / 2.0).min(params.c * params.c / params.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Geometry {
    /// The interval `(start, start + length)`.
    Interval { start: f64, length: f64 },
    /// The rectangle `(0, lx) × (0, ly)`.
    Rectangle { lx: f64, ly: f64 },
    /// The disk of radius `radius` centred at the origin.
    Disk { radius: f64 },
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match self {
            Geometry::Interval { .. } => 1,
            Geometry::Rectangle { .. } | Geometry::Disk { .. } => 2,
        }
    }
}

/// Exact principal eigenvalue of the negative Dirichlet Laplacian.
pub fn analytic_lambda0(geometry: &Geometry) -> f64 {
    use std::f64::consts::PI;
    match *geometry {
        Geometry::Interval { length, .. } => (PI / length).powi(2),
        Geometry::Rectangle { lx, ly } => PI * PI * (1.0 / (lx * lx) + 1.0 / (ly * ly)),
        Geometry::Disk { radius } => (BESSEL_J0_FIRST_ZERO / radius).powi(2),
    }
}

/// Neighbour of a node along one axis direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub node: usize,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Arms {
    pub minus: Option<Arm>,
    pub plus: Option<Arm>,
}

#[derive(Debug, Clone)]
pub struct Domain {
    geometry: Geometry,
    dim: usize,
    spacing: Vec<f64>,
    coords: Vec<f64>,
    n_interior: usize,
    arms: Vec<Arms>,
    parent: Vec<Option<usize>>,
    weights: Vec<f64>,
    bandwidth: usize,
}

impl Domain {
    /// Discretizes `geometry` with `cells` lattice cells per axis. For the
    /// disk, `cells[0]` counts cells across the diameter.
    pub fn new(geometry: Geometry, cells: &[usize]) -> Result<Self> {
        match geometry {
            Geometry::Interval { start, length } => {
                if !(length > 0.0) || !start.is_finite() {
                    return Err(Error::invalid("interval length must be positive"));
                }
                let n = *cells.first().ok_or_else(|| Error::invalid("missing cell count"))?;
                if n < 4 {
                    return Err(Error::invalid("need at least 3 interior nodes per axis"));
                }
                Ok(Self::lattice(geometry, [start, 0.0], [length / n as f64, 1.0], [n, 0]))
            }
            Geometry::Rectangle { lx, ly } => {
                if !(lx > 0.0 && ly > 0.0) {
                    return Err(Error::invalid("rectangle sides must be positive"));
                }
                let (nx, ny) = match cells {
                    [n] => (*n, *n),
                    [nx, ny, ..] => (*nx, *ny),
                    [] => return Err(Error::invalid("missing cell count")),
                };
                if nx < 4 || ny < 4 {
                    return Err(Error::invalid("need at least 3 interior nodes per axis"));
                }
                Ok(Self::lattice(
                    geometry,
                    [0.0, 0.0],
                    [lx / nx as f64, ly / ny as f64],
                    [nx, ny],
                ))
            }
            Geometry::Disk { radius } => {
                if !(radius > 0.0) {
                    return Err(Error::invalid("disk radius must be positive"));
                }
                let n = *cells.first().ok_or_else(|| Error::invalid("missing cell count"))?;
                if n < 8 {
                    return Err(Error::invalid("disk needs at least 8 cells across"));
                }
                Ok(Self::disk(radius, n))
            }
        }
    }

    /// Uniform lattice covering a box; every off-box-edge node is interior.
    fn lattice(geometry: Geometry, origin: [f64; 2], h: [f64; 2], n: [usize; 2]) -> Self {
        let dim = geometry.dim();
        let ny = if dim == 1 { 0 } else { n[1] };
        let nx = n[0];
        let is_interior = |i: usize, j: usize| {
            i > 0 && i < nx && (dim == 1 || (j > 0 && j < ny))
        };
        // lattice (i, j) -> node index; interior first, both blocks row-major
        let mut index = vec![usize::MAX; (nx + 1) * (ny + 1)];
        let mut order = Vec::with_capacity(index.len());
        for pass in [true, false] {
            for j in 0..=ny {
                for i in 0..=nx {
                    if is_interior(i, j) == pass {
                        index[j * (nx + 1) + i] = order.len();
                        order.push((i, j));
                    }
                }
            }
        }
        let n_nodes = order.len();
        let n_interior = (nx - 1) * if dim == 1 { 1 } else { ny - 1 };
        let mut coords = Vec::with_capacity(n_nodes * dim);
        let mut arms = vec![Arms::default(); n_nodes * dim];
        let mut weights = Vec::with_capacity(n_nodes);
        for (node, &(i, j)) in order.iter().enumerate() {
            coords.push(origin[0] + i as f64 * h[0]);
            if dim == 2 {
                coords.push(origin[1] + j as f64 * h[1]);
            }
            let at = |ii: usize, jj: usize| index[jj * (nx + 1) + ii];
            let a = &mut arms[node * dim];
            if i > 0 {
                a.minus = Some(Arm { node: at(i - 1, j), dist: h[0] });
            }
            if i < nx {
                a.plus = Some(Arm { node: at(i + 1, j), dist: h[0] });
            }
            let edge = |k: usize, n: usize| if k == 0 || k == n { 0.5 } else { 1.0 };
            let mut w = h[0] * edge(i, nx);
            if dim == 2 {
                let a = &mut arms[node * dim + 1];
                if j > 0 {
                    a.minus = Some(Arm { node: at(i, j - 1), dist: h[1] });
                }
                if j < ny {
                    a.plus = Some(Arm { node: at(i, j + 1), dist: h[1] });
                }
                w *= h[1] * edge(j, ny);
            }
            weights.push(w);
        }
        let spacing = h[..dim].to_vec();
        let mut d = Self {
            geometry,
            dim,
            spacing,
            coords,
            n_interior,
            arms,
            parent: vec![None; n_nodes],
            weights,
            bandwidth: 0,
        };
        d.bandwidth = d.compute_bandwidth();
        d
    }

    /// Embedded-boundary grid: lattice nodes strictly inside the circle are
    /// unknowns; each stencil arm that leaves the disk ends on a boundary node
    /// placed exactly on the circle (Shortley-Weller).
    fn disk(radius: f64, n: usize) -> Self {
        let h = 2.0 * radius / n as f64;
        let pos = |k: usize| -radius + k as f64 * h;
        // a small margin keeps every arm length >= 1e-3 h
        let inside = |i: usize, j: usize| pos(i).hypot(pos(j)) <= radius - 1e-3 * h;
        let mut index = vec![usize::MAX; (n + 1) * (n + 1)];
        let mut coords = Vec::new();
        let mut n_interior = 0;
        for j in 0..=n {
            for i in 0..=n {
                if inside(i, j) {
                    index[j * (n + 1) + i] = n_interior;
                    coords.extend([pos(i), pos(j)]);
                    n_interior += 1;
                }
            }
        }
        let mut arms = vec![Arms::default(); n_interior * 2];
        let mut parent = vec![None; n_interior];
        let mut weights = Vec::with_capacity(n_interior);
        for j in 0..=n {
            for i in 0..=n {
                let node = index[j * (n + 1) + i];
                if node == usize::MAX {
                    continue;
                }
                let (x, y) = (pos(i), pos(j));
                weights.push(clipped_cell_area(x, y, h, radius));
                for axis in 0..2 {
                    for dir in [-1i64, 1] {
                        let (ni, nj) = if axis == 0 {
                            (i as i64 + dir, j as i64)
                        } else {
                            (i as i64, j as i64 + dir)
                        };
                        let neighbour = if (0..=n as i64).contains(&ni) && (0..=n as i64).contains(&nj) {
                            let idx = index[nj as usize * (n + 1) + ni as usize];
                            (idx != usize::MAX).then_some(idx)
                        } else {
                            None
                        };
                        let arm = match neighbour {
                            Some(idx) => Arm { node: idx, dist: h },
                            None => {
                                // distance along the axis to the circle
                                let (along, across) = if axis == 0 { (x, y) } else { (y, x) };
                                let reach = (radius * radius - across * across).max(0.0).sqrt();
                                let dist = if dir > 0 { reach - along } else { reach + along };
                                let b = coords.len() / 2;
                                let mut p = [x, y];
                                p[axis] += dir as f64 * dist;
                                coords.extend(p);
                                let mut back = Arms::default();
                                let to_parent = Some(Arm { node, dist });
                                if dir > 0 {
                                    back.minus = to_parent;
                                } else {
                                    back.plus = to_parent;
                                }
                                let mut ba = [Arms::default(); 2];
                                ba[axis] = back;
                                arms.extend(ba);
                                parent.push(Some(node));
                                Arm { node: b, dist }
                            }
                        };
                        let slot = &mut arms[node * 2 + axis];
                        if dir > 0 {
                            slot.plus = Some(arm);
                        } else {
                            slot.minus = Some(arm);
                        }
                    }
                }
            }
        }
        // cells of excluded lattice nodes that still overlap the disk go to the
        // nearest interior node; boundary points carry no volume
        for j in 0..=n {
            for i in 0..=n {
                if index[j * (n + 1) + i] != usize::MAX {
                    continue;
                }
                let area = clipped_cell_area(pos(i), pos(j), h, radius);
                if area == 0.0 {
                    continue;
                }
                let mut best: Option<(f64, usize)> = None;
                for nj in j.saturating_sub(2)..=(j + 2).min(n) {
                    for ni in i.saturating_sub(2)..=(i + 2).min(n) {
                        let idx = index[nj * (n + 1) + ni];
                        if idx == usize::MAX {
                            continue;
                        }
                        let d2 = (ni.abs_diff(i).pow(2) + nj.abs_diff(j).pow(2)) as f64;
                        if best.is_none_or(|(b, _)| d2 < b) {
                            best = Some((d2, idx));
                        }
                    }
                }
                if let Some((_, idx)) = best {
                    weights[idx] += area;
                }
            }
        }
        weights.resize(coords.len() / 2, 0.0);
        let mut d = Self {
            geometry: Geometry::Disk { radius },
            dim: 2,
            spacing: vec![h, h],
            coords,
            n_interior,
            arms,
            parent,
            weights,
            bandwidth: 0,
        };
        d.bandwidth = d.compute_bandwidth();
        d
    }

    fn compute_bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n_interior {
            for axis in 0..self.dim {
                let a = self.arms(i, axis);
                for arm in [a.minus, a.plus].into_iter().flatten() {
                    if arm.node < self.n_interior {
                        bw = bw.max(arm.node.abs_diff(i));
                    }
                }
            }
        }
        bw
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_nodes() - self.n_interior
    }

    pub fn interior_nodes(&self) -> std::ops::Range<usize> {
        0..self.n_interior
    }

    pub fn boundary_nodes(&self) -> std::ops::Range<usize> {
        self.n_interior..self.n_nodes()
    }

    pub fn is_interior(&self, node: usize) -> bool {
        node < self.n_interior
    }

    pub fn point(&self, node: usize) -> &[f64] {
        &self.coords[node * self.dim..(node + 1) * self.dim]
    }

    pub fn arms(&self, node: usize, axis: usize) -> Arms {
        self.arms[node * self.dim + axis]
    }

    /// Interior node a boundary point was spawned from (disk only).
    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Quadrature weight (clipped cell volume) of each node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Half-bandwidth of interior-interior couplings.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }
}

/// Area of the cell `[x ± h/2] × [y ± h/2]` inside the disk, by midpoint
/// sub-sampling.
fn clipped_cell_area(x: f64, y: f64, h: f64, radius: f64) -> f64 {
    const SUB: usize = 12;
    let corner_max = (x.abs() + h / 2.0).hypot(y.abs() + h / 2.0);
    if corner_max <= radius {
        return h * h;
    }
    let s = h / SUB as f64;
    let mut count = 0usize;
    for a in 0..SUB {
        for b in 0..SUB {
            let px = x - h / 2.0 + (a as f64 + 0.5) * s;
            let py = y - h / 2.0 + (b as f64 + 0.5) * s;
            if px.hypot(py) <= radius {
                count += 1;
            }
        }
    }
    h * h * count as f64 / (SUB * SUB) as f64
}

/// Lebesgue exponent and Sobolev order of a discrete norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOrder {
    pub p: f64,
    pub sobolev_order: u8,
}

impl NormOrder {
    pub fn new(p: f64, sobolev_order: u8) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::invalid(format!("norm exponent must satisfy 1 < p < inf, got {p}")));
        }
        if sobolev_order > 2 {
            return Err(Error::invalid("sobolev order must be 0, 1 or 2"));
        }
        Ok(Self { p, sobolev_order })
    }

    pub fn lp(p: f64) -> Result<Self> {
        Self::new(p, 0)
    }

    /// Exponent admissible for problem data in dimension `dim`:
    /// `p > max{1, dim/2}` and `p != 3/2`.
    pub fn validate_for_data(p: f64, dim: usize) -> Result<()> {
        if (p - 1.5).abs() < 1e-12 {
            return Err(Error::UnsupportedExponent(p));
        }
        if !(p > 1.0_f64.max(dim as f64 / 2.0)) || !p.is_finite() {
            return Err(Error::invalid(format!(
                "data exponent must satisfy p > max(1, n/2) with n = {dim}, got {p}"
            )));
        }
        Ok(())
    }
}

/// Discrete `W^s_p` norm, `s ∈ {0, 1, 2}`:
/// `(Σ_{|α| ≤ s} Σ_i w_i |D^α u_i|^p)^{1/p}` with clipped-cell weights `w_i`
/// (trapezoidal on lattices; interior-cell fractions on the disk, where
/// boundary points carry weight zero).
pub fn discrete_norm(field: &Field, domain: &Domain, order: NormOrder) -> Result<f64> {
    if !(order.p > 1.0) {
        return Err(Error::invalid(format!("norm exponent must exceed 1, got {}", order.p)));
    }
    if field.len() != domain.n_nodes() {
        return Err(Error::invalid("field does not match domain"));
    }
    let p = order.p;
    let w = domain.weights();
    let acc = |vals: &[f64]| -> f64 {
        vals.iter().zip(w).map(|(v, wi)| wi * v.abs().powf(p)).sum::<f64>()
    };
    let mut total = acc(field.values());
    if order.sobolev_order >= 1 {
        let grad = operators::gradient(field, domain);
        for comp in grad.components() {
            total += acc(comp.values());
        }
        if order.sobolev_order >= 2 {
            for d in operators::second_derivatives(field, &grad, domain) {
                total += acc(d.values());
            }
        }
    }
    Ok(total.powf(1.0 / p))
}

/// Norm of a vector field: the `p`-sum of the component norms.
pub fn discrete_vector_norm(field: &crate::operators::VectorField, domain: &Domain, order: NormOrder) -> Result<f64> {
    let mut total = 0.0;
    for comp in field.components() {
        total += discrete_norm(comp, domain, order)?.powf(order.p);
    }
    Ok(total.powf(1.0 / order.p))
}

/// Principal eigenvalue of `-Δ_h` by inverse power iteration.
///
/// Stops once the relative change between consecutive eigenvalue estimates
/// drops below `tol`; otherwise fails after `max_iter` iterations and reports
/// the last estimate.
pub fn numeric_lambda0(
    operator: &DirichletOperator,
    domain: &Domain,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = domain.n_interior();
    if operator.n_interior() != n {
        return Err(Error::invalid("operator was assembled for another domain"));
    }
    let mut neg = BandedMatrix::zeros(n, operator.bandwidth());
    operator.add_scaled_to(&mut neg, -1.0);
    let lu = neg.factor()?;
    // positive start vector: overlaps the positive principal eigenvector
    let mut x = vec![1.0; n];
    let mut estimate = f64::NAN;
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let y = lu.solve(&x);
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let next = xx / xy;
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        x = y.into_iter().map(|a| a / norm).collect();
        let change = ((next - estimate) / next).abs();
        trace.push(change);
        estimate = next;
        if change < tol {
            return Ok(estimate);
        }
    }
    Err(Error::NumericalFailure {
        what: format!("inverse power iteration did not reach tol {tol:e} in {max_iter} iterations"),
        last_iterate: Some(estimate),
        trace,
    })
}
