//! Nonlinear 2D magnetostatics and multi-material topology optimization of a
//! permanent-magnet rotor with a demagnetization state constraint.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: triangular meshes, the parametric machine sector, polar disk meshes, mesh I/O.
//! * [`materials`]: constitutive laws `b -> h` with analytic Jacobians.
//! * [`penalty`]: the demagnetization penalty, the relaxed constraint functional and the
//!   partial-demagnetization metric.
//! * [`fem`]: P1 assembly, constraint elimination, sparse Cholesky, damped Newton.
//! * [`machine`]: sources, airgap torque, adjoint problems.
//! * [`tderiv`]: exterior problem, topological derivative evaluation and tabulation.
//! * [`optimizer`]: vector level set, augmented Lagrangian, the outer loop.
//! * [`config`], [`vtk`], [`commands`]: run configuration, export and CLI orchestration.

pub mod commands;
pub mod config;
pub mod error;
pub mod fem;
pub mod machine;
pub mod materials;
pub mod mesh;
pub mod optimizer;
pub mod penalty;
pub mod tderiv;
pub mod vtk;

pub use error::{Error, Result};

/// Two-component vector used for flux densities and field strengths.
pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}
