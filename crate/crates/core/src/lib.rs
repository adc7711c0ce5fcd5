//! Simulation and verification toolkit for Gaussian processes with nontrivial
//! quartic variation.
//!
//! The central object is the time slice `F(t) = u(x, t)` of the stochastic heat
//! equation driven by space-time white noise, reproduced exactly through its
//! covariance. On top of exact path sampling the crate provides every discrete
//! Riemann-type functional of interest (midpoint, offset midpoint, trapezoid,
//! alternating quadratic variation, power sums), the analytic constants that
//! govern their limits, and Monte Carlo experiments that check the limit laws,
//! including the change-of-variable formula whose correction term is an Itô
//! integral against an independent Brownian motion.

pub mod analytic;
pub mod error;
pub mod functions;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod sums;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;
pub use kernels::CovKernel;
