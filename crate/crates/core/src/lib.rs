//! Numerical toolkit for Schrödinger operators with short-range potentials in
//! three dimensions: Kato-class diagnostics, Birman-Schwinger spectral checks,
//! perturbed resolvents and functional-calculus kernels.

pub mod birman_schwinger;
pub mod bound_states;
pub mod error;
pub mod free_kernels;
pub mod grids;
pub mod harness;
pub mod partial_wave;
pub mod potentials;
pub mod propagators;
pub mod quadrature;
pub mod resolvent;
pub mod special;

pub use error::{Error, Result};

/// A point in R^3.
pub type Point = [f64; 3];

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub(crate) fn norm(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}
