//! Numerical solver and verification harness for Kuznetsov's equation of
//! nonlinear acoustics,
//!
//! ```text
//! u_tt - c² Δu - b Δu_t = k (u²)_tt + ρ0 (v·v)_tt,   v_t = -ρ0⁻¹ ∇u,
//! ```
//!
//! with nonhomogeneous Dirichlet data `u|Γ = g` on an interval, a rectangle or
//! a disk.
//!
//! * [`domain`]: geometry, constants, principal eigenvalue, discrete norms
//! * [`operators`]: Dirichlet Laplacian, gradient, trace
//! * [`linear_solver`]: strongly damped wave and heat solvers, modal oracle,
//!   boundary lifting
//! * [`nonlinear_solver`]: Newton / semi-implicit stepping of the full model
//! * [`diagnostics`]: decay-rate fits, compatibility checks, convergence and
//!   perturbation studies
//! * [`cli`]: scenario configuration, presets and the command-line runner

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cli;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod linear_solver;
pub mod nonlinear_solver;
pub mod operators;

pub use domain::{Domain, Geometry, NormOrder, PhysicalParams};
pub use error::{Error, Result};
pub use linear_solver::{BoundaryData, LinearProblem, State, Trajectory};
pub use nonlinear_solver::NonlinearConfig;
pub use operators::{DirichletOperator, Field, VectorField};
