//! Hypothesis testing with pairwise (composite) likelihoods.
//!
//! The centrepiece is a nonparametric saddlepoint test statistic built from
//! per-unit pairwise scores by exponential tilting. It is compared against the
//! classical Wald, score and likelihood-ratio type statistics, whose
//! calibration depends on the Godambe (sandwich) information.
//!
//! The crate is `no_std` and only needs `alloc`. Dataset IO, the simulation
//! harness and the command-line interface live in the `pairsp` crate.
//!
//! Layout:
//!
//! - [`numerics`]: dense linear algebra, damped Newton, finite differences,
//!   chi-square tails and reproducible random streams.
//! - [`model`]: the [`model::ScoreModel`] abstraction and unit score
//!   decomposition.
//! - [`models`]: equicorrelated normal, AR(1) and geostatistical models.
//! - [`inference`]: pairwise likelihood fitting and Godambe matrices.
//! - [`classic`]: Wald, score and adjusted likelihood-ratio statistics.
//! - [`reparam`]: models in alternative coordinates.
//! - [`saddlepoint`]: exponential tilting, the saddlepoint statistic and the
//!   tilted bootstrap.

#![no_std]
// When another crate in the build enables `num-traits/std`, inherent float
// methods shadow the `Float` trait imports.
#![allow(unused_imports)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classic;
pub mod error;
pub mod inference;
pub mod model;
pub mod models;
pub mod numerics;
pub mod reparam;
pub mod saddlepoint;

pub use error::{Error, Result};
