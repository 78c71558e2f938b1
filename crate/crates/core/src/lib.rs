//! Invariant tori for axisymmetric potentials, built by generating-function
//! maps from a separable Stäckel toy Hamiltonian.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anglerec;
pub mod coords;
pub mod diagnostics;
pub mod error;
pub mod numerics;
pub mod orbit;
pub mod scalar;
pub mod staeckel;
pub mod target;
pub mod torusfit;

pub use error::{Error, Result};
pub use scalar::{Dual, Real};

pub type CoordParams = coords::CoordParams<f64>;
pub type PhasePoint = coords::PhasePoint<f64>;
pub type ProlatePoint = coords::ProlatePoint<f64>;
pub type ToyParams = staeckel::ToyParams<f64>;
pub type Integrals = staeckel::Integrals<f64>;
pub use staeckel::{StaeckelToy, ToyAA, ToyJacobian};
