//! Reduced-basis workbench for unsteady Stokes and Navier-Stokes flow in a
//! lid-driven cavity on a parametrized rectangle.
//!
//! The pipeline is the usual offline/online split:
//!
//! 1. [`mesh`] builds a structured triangulation of the reference square and
//!    the parameter-dependent tensors induced by the affine geometric map.
//! 2. [`assemble`] provides mixed finite-element spaces and assembles the
//!    mass, diffusion, divergence and convection forms, together with their
//!    affine-in-parameter decompositions.
//! 3. [`stab`] adds the residual-based stabilization blocks (pressure-gradient
//!    stabilization for equal-order pairs, pressure jumps for P1/P0, SUPG for
//!    Navier-Stokes).
//! 4. [`fom`] runs implicit-Euler full-order solves and produces snapshots.
//! 5. [`reduction`] compresses snapshots with POD-Greedy, optionally enriches
//!    the velocity space with supremizers, and projects all operators.
//! 6. [`rom`] solves the reduced systems online under three stabilization
//!    strategies.
//! 7. [`diag`] computes inf-sup constants and L2-in-time errors;
//!    [`experiment`] orchestrates full studies and writes CSV reports.

pub mod assemble;
pub mod config;
pub mod diag;
pub mod experiment;
pub mod fom;
pub mod io;
pub mod mesh;
pub mod quad;
pub mod reduction;
pub mod rom;
pub mod space;
pub mod sparse;
pub mod stab;

mod error;

pub use error::Error;

/// Problem parameters: viscosity and the horizontal length of the domain.
///
/// The current domain is `(0, mu2) x (0, 1)`, obtained from the reference
/// unit square by the affine map `T(x, y) = (mu2 * x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Kinematic viscosity.
    pub nu: f64,
    /// Horizontal domain length.
    pub mu2: f64,
}

impl Params {
    pub fn new(nu: f64, mu2: f64) -> Result<Self, Error> {
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        if !(mu2 > 0.0) {
            return Err(Error::InvalidParameter(format!("mu2 must be positive, got {mu2}")));
        }
        Ok(Self { nu, mu2 })
    }

    /// Viscosity from a Reynolds number on the unit-speed lid cavity.
    pub fn from_reynolds(re: f64, mu2: f64) -> Result<Self, Error> {
        if !(re > 0.0) {
            return Err(Error::InvalidParameter(format!("Re must be positive, got {re}")));
        }
        Self::new(1.0 / re, mu2)
    }
}
