//! Computational potential theory for subharmonic functions.
//!
//! The crate evaluates Riesz kernels and potentials of finite signed atomic
//! charges, extracts Riesz measures from sampled functions by finite
//! differences, builds harmonic measures and Green's functions for balls, and
//! runs numerical checks of the uniqueness theorem for pairs of subharmonic
//! functions that coincide outside a compact set.
//!
//! Sign conventions follow the kernel family
//!
//! ```text
//! k_s(t) = ln t            (s = 0)
//! k_s(t) = -sign(s) t^{-s} (s != 0)
//! ```
//!
//! so the three-dimensional kernel is `-1/|y - x|` and the Riesz measure of a
//! subharmonic `u` is `c_d * Laplacian(u)` with `c_d` from
//! [`kernels::riesz_normalization`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balls;
pub mod charges;
pub mod checks;
pub mod error;
pub mod function;
pub mod grid;
pub mod kernels;
pub mod potentials;
pub mod report;
pub mod uniqueness;

pub use charges::{DiscreteCharge, PointCharge, SphereRule};
pub use error::{Error, Result};
pub use function::{HarmonicPoly, HarmonicTerm, TestFunction};
pub use kernels::{Dimension, ExtendedReal};
pub use potentials::PotentialValue;
