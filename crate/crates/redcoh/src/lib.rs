//! Exact computation of vertex-operator-algebra correlation functions on
//! Riemann surfaces of genus 0, 1 and 2 (plus the genus-g Schottky kernel
//! layer), the Zhu-type reduction recursions that relate them, and the
//! reduction-cohomology constructions built on top of those recursions.
//!
//! The concrete vertex algebra is the rank-one Heisenberg (free boson) VOA.
//! All coefficients are exact rationals; the generic series and matrix
//! kernels also accept floating-point scalars.

pub mod cohomology;
pub mod elliptic;
pub mod error;
pub mod genus2;
pub mod linalg;
pub mod reduction;
pub mod scalar;
pub mod schottky;
pub mod series;
pub mod voa;

pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};

/// Exact truncated series in one variable.
pub type RSeries = series::Series<Rational>;
/// Exact truncated series in several variables.
pub type RMultiSeries = series::MultiSeries<Rational>;
/// Double-precision series, useful for quick numerical exploration.
pub type F64Series = series::Series<f64>;
/// Exact dense matrix.
pub type RMatrix = linalg::Matrix<Rational>;
