//! Identification, influence-function estimation and exact machine
//! verification for the permutation missing-not-at-random model, plus the
//! missing-exposure m-DAG/SWIG example.
//!
//! The exact-algebra paths are generic over [`Scalar`]; the aliases below pin
//! the two instantiations used in practice.

// index loops mirror the subscripts of the probability tables
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod estimate;
pub mod identify;
pub mod mdag;
pub mod nuisance;
pub mod permlaw;
pub mod scalar;
pub mod strata;
pub mod tabular;
pub mod vonmises;

pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};

/// Working-precision tables.
pub type Law = tabular::TabularLaw<f64>;
/// Exact tables.
pub type ExactLaw = tabular::TabularLaw<Rational>;
pub type Model = permlaw::PermutationLaw<f64>;
pub type ExactModel = permlaw::PermutationLaw<Rational>;
pub type Nuisances = nuisance::NuisanceSet<f64>;
pub type ExactNuisances = nuisance::NuisanceSet<Rational>;
