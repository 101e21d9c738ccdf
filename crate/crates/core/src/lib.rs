//! Simulation and estimation for the generalized Jacobi equation
//! `dx = -θ(x - μ) dt + γ [θ x(1 - x)]^β dw` driven by fractional Brownian
//! motion.
//!
//! The crate covers exact fBm synthesis ([`gaussian_paths`]), the singular
//! change of variable that turns the equation into one with additive noise
//! ([`jacobi_transform`]), the implicit Euler scheme in transformed
//! coordinates ([`euler_solver`]), pullback fixed points and time averages
//! ([`ergodic`]), density estimation from the explicit Malliavin derivative
//! ([`malliavin_density`]) and a Morris–Lecar neuron whose potassium gating
//! follows the equation ([`morris_lecar`]).
//!
//! Monte Carlo ensembles run through [`parallel::map_indexed`]; with the
//! default `parallel` feature they use rayon, and results never depend on the
//! execution mode.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ergodic;
pub mod error;
pub mod euler_solver;
pub mod gaussian_paths;
pub mod io;
pub mod jacobi_transform;
pub mod malliavin_density;
pub mod morris_lecar;
pub mod parallel;
pub mod quadrature;

pub use error::{Error, Result};
pub use euler_solver::{SolutionPath, SolverConfig};
pub use gaussian_paths::{GaussianPath, StepFunction};
pub use jacobi_transform::{ModelParams, TransformTable};
pub use morris_lecar::MLParams;
pub use parallel::Execution;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
