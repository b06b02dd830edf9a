//! Numerical toolkit for the fourth-order critical equation
//! `Δ²u + div(a∇u) + bu = f|u|^{N−2}u + λ|u|^{q−2}u` on a flat periodic box,
//! `N = 2n/(n−4)`.
//!
//! * [`spectral`]: grids, fields, FFT-based operators and quadrature.
//! * [`problem`] / [`functionals`]: the operator, energies, gradients, residuals.
//! * [`nehari`]: fibering roots, Nehari projection and threshold constants.
//! * [`solvers`]: constrained minimisation and the mountain-pass string method.
//! * [`bubble`]: radial quadrature of concentrated test functions and
//!   expansion fits.

// `!(x > 0.0)` style guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubble;
pub mod error;
pub mod functionals;
pub mod nehari;
pub mod problem;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
pub use functionals::EnergyBreakdown;
pub use problem::{apply_p, invert_p, Problem, Sign, Symbol};
pub use spectral::{Field, GridSpec, Spectrum};
