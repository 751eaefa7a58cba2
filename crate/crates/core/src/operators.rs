//! Discrete spatial operators: Dirichlet Laplacian, gradient, second
//! derivatives and boundary trace.
//!
//! Boundary unknowns are eliminated: the Laplacian acts on interior values and
//! the Dirichlet data enters through a separate coupling term. On the uniform
//! lattices the interior block is the symmetric 3/5-point stencil; on the disk
//! the arms reaching the circle are shortened (Shortley-Weller), which keeps
//! the operator an M-matrix but not symmetric.

use crate::banded::BandedMatrix;
use crate::domain::Domain;
use crate::error::{Error, Result};

/// Scalar nodal field on a [`Domain`] (interior nodes first, then boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(domain: &Domain) -> Self {
        Self {
            values: vec![0.0; domain.n_nodes()],
        }
    }

    pub fn from_fn(domain: &Domain, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            values: (0..domain.n_nodes()).map(|i| f(domain.point(i))).collect(),
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Field with the given interior values and boundary values.
    pub fn extend(interior: &[f64], boundary: &[f64]) -> Self {
        let mut values = Vec::with_capacity(interior.len() + boundary.len());
        values.extend_from_slice(interior);
        values.extend_from_slice(boundary);
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interior<'a>(&'a self, domain: &Domain) -> &'a [f64] {
        &self.values[..domain.n_interior()]
    }

    pub fn set_boundary(&mut self, domain: &Domain, boundary: &[f64]) {
        self.values[domain.n_interior()..].copy_from_slice(boundary);
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Vector field with one [`Field`] per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn zeros(domain: &Domain) -> Self {
        Self {
            components: (0..domain.dim()).map(|_| Field::zeros(domain)).collect(),
        }
    }

    pub fn from_components(components: Vec<Field>) -> Self {
        Self { components }
    }

    pub fn from_fn(domain: &Domain, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut v = Self::zeros(domain);
        for i in 0..domain.n_nodes() {
            let val = f(domain.point(i));
            for (comp, x) in v.components.iter_mut().zip(val) {
                comp.values[i] = x;
            }
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (x, y) in self.components.iter_mut().zip(&other.components) {
            x.axpy(a, y);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(s)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

pub type Stencil = Vec<(usize, f64)>;

/// Three-point (possibly non-uniform) Laplacian stencil at an interior node.
pub fn laplacian_stencil(domain: &Domain, node: usize) -> Stencil {
    let mut st = vec![(node, 0.0)];
    for axis in 0..domain.dim() {
        let arms = domain.arms(node, axis);
        let (m, p) = (
            arms.minus.expect("interior node has both arms"),
            arms.plus.expect("interior node has both arms"),
        );
        let s = m.dist + p.dist;
        st[0].1 -= 2.0 / (m.dist * p.dist);
        st.push((m.node, 2.0 / (m.dist * s)));
        st.push((p.node, 2.0 / (p.dist * s)));
    }
    st
}

/// First-derivative stencil along `axis`: centred where both arms exist,
/// one-sided second-order (three points) at boundary nodes. Disk boundary
/// points have no arms across their grid line and reuse their parent's stencil.
pub fn gradient_stencil(domain: &Domain, node: usize, axis: usize) -> Stencil {
    let arms = domain.arms(node, axis);
    match (arms.minus, arms.plus) {
        (Some(m), Some(p)) => {
            let (dm, dp) = (m.dist, p.dist);
            vec![
                (m.node, -dp / (dm * (dm + dp))),
                (node, (dp - dm) / (dm * dp)),
                (p.node, dm / (dp * (dm + dp))),
            ]
        }
        (None, Some(first)) => one_sided(domain, node, axis, first, 1.0),
        (Some(first), None) => one_sided(domain, node, axis, first, -1.0),
        (None, None) => match domain.parent(node) {
            Some(parent) => gradient_stencil(domain, parent, axis),
            None => Vec::new(),
        },
    }
}

fn one_sided(domain: &Domain, node: usize, axis: usize, first: crate::domain::Arm, sign: f64) -> Stencil {
    let next = domain.arms(first.node, axis);
    let second = if sign > 0.0 { next.plus } else { next.minus };
    let d1 = first.dist;
    match second {
        Some(s) => {
            let d2 = s.dist;
            vec![
                (node, -sign * (2.0 * d1 + d2) / (d1 * (d1 + d2))),
                (first.node, sign * (d1 + d2) / (d1 * d2)),
                (s.node, -sign * d1 / (d2 * (d1 + d2))),
            ]
        }
        None => vec![(node, -sign / d1), (first.node, sign / d1)],
    }
}

fn apply_stencil(st: &[(usize, f64)], u: &[f64]) -> f64 {
    st.iter().map(|&(j, w)| w * u[j]).sum()
}

/// Interior Dirichlet Laplacian with boundary coupling.
#[derive(Debug, Clone)]
pub struct DirichletOperator {
    n_interior: usize,
    n_boundary: usize,
    bandwidth: usize,
    /// Per interior row: entries over all nodes (columns `>= n_interior` are
    /// boundary couplings).
    rows: Vec<Stencil>,
}

impl DirichletOperator {
    pub fn new(domain: &Domain) -> Self {
        let rows = domain
            .interior_nodes()
            .map(|i| laplacian_stencil(domain, i))
            .collect();
        Self {
            n_interior: domain.n_interior(),
            n_boundary: domain.n_boundary(),
            bandwidth: domain.bandwidth(),
            rows,
        }
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn rows(&self) -> &[Stencil] {
        &self.rows
    }

    /// Δ_h applied to a full nodal vector, returned on interior nodes.
    pub fn apply_full(&self, values: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|st| apply_stencil(st, values)).collect()
    }

    /// Adds `scale * A` (interior block) into `m`.
    pub fn add_scaled_to(&self, m: &mut BandedMatrix, scale: f64) {
        for (i, st) in self.rows.iter().enumerate() {
            for &(j, w) in st {
                if j < self.n_interior {
                    m.add(i, j, scale * w);
                }
            }
        }
    }

    /// Contribution `B g` of the boundary values to the interior rows.
    pub fn boundary_coupling(&self, boundary: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|st| {
                st.iter()
                    .filter(|(j, _)| *j >= self.n_interior)
                    .map(|&(j, w)| w * boundary[j - self.n_interior])
                    .sum()
            })
            .collect()
    }
}

/// `A u_I + B u_Γ`: the Laplacian of the field assembled from interior
/// unknowns and boundary values, on interior nodes.
pub fn apply_dirichlet(operator: &DirichletOperator, interior: &[f64], boundary: &[f64]) -> Result<Vec<f64>> {
    if interior.len() != operator.n_interior || boundary.len() != operator.n_boundary {
        return Err(Error::invalid(format!(
            "expected {} interior and {} boundary values, got {} and {}",
            operator.n_interior,
            operator.n_boundary,
            interior.len(),
            boundary.len()
        )));
    }
    let mut full = Vec::with_capacity(interior.len() + boundary.len());
    full.extend_from_slice(interior);
    full.extend_from_slice(boundary);
    Ok(operator.apply_full(&full))
}

/// Δ_h of `field` with its boundary entries replaced by `boundary_values`.
/// The result lives on interior nodes; its boundary entries are zero.
pub fn laplacian(field: &Field, boundary_values: &[f64], domain: &Domain) -> Result<Field> {
    if field.len() != domain.n_nodes() {
        return Err(Error::invalid("field does not match domain"));
    }
    if boundary_values.len() != domain.n_boundary() {
        return Err(Error::invalid(format!(
            "need {} boundary values, got {}",
            domain.n_boundary(),
            boundary_values.len()
        )));
    }
    let mut full = field.clone();
    full.set_boundary(domain, boundary_values);
    let mut out = Field::zeros(domain);
    for i in domain.interior_nodes() {
        out.values[i] = apply_stencil(&laplacian_stencil(domain, i), full.values());
    }
    Ok(out)
}

pub fn gradient(field: &Field, domain: &Domain) -> VectorField {
    let comps = (0..domain.dim())
        .map(|axis| derivative(field, domain, axis))
        .collect();
    VectorField::from_components(comps)
}

/// Derivative along one axis at every node.
pub fn derivative(field: &Field, domain: &Domain, axis: usize) -> Field {
    let u = field.values();
    Field::from_values(
        (0..domain.n_nodes())
            .map(|i| apply_stencil(&gradient_stencil(domain, i, axis), u))
            .collect(),
    )
}

/// All second derivatives `D^α u`, `|α| = 2` (each multi-index once):
/// `[u_xx]` in 1D, `[u_xx, u_xy, u_yy]` in 2D. Pure derivatives use the compact
/// three-point stencil where both arms exist and the derivative of `grad`
/// elsewhere.
pub fn second_derivatives(field: &Field, grad: &VectorField, domain: &Domain) -> Vec<Field> {
    let dim = domain.dim();
    let u = field.values();
    let mut out = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            let outer = derivative(grad.component(b), domain, a);
            if a != b {
                out.push(outer);
                continue;
            }
            let mut pure = outer.into_values();
            for (i, slot) in pure.iter_mut().enumerate() {
                let arms = domain.arms(i, a);
                if let (Some(m), Some(p)) = (arms.minus, arms.plus) {
                    let s = m.dist + p.dist;
                    *slot = 2.0 / s * ((u[p.node] - u[i]) / p.dist - (u[i] - u[m.node]) / m.dist);
                }
            }
            out.push(Field::from_values(pure));
        }
    }
    out
}

pub fn boundary_trace(field: &Field, domain: &Domain) -> Vec<f64> {
    field.values()[domain.n_interior()..].to_vec()
}
