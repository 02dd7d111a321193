//! Simulation of the nonlocal Young experiment for EPR-correlated pairs.
//!
//! Special functions and modular algebra are generic over [`Real`]; the
//! state, sampling and analysis layers work in `f64`.

pub mod analysis;
pub mod error;
pub mod modular;
pub mod observables;
pub mod sampler;
pub mod scalar;
pub mod specfun;
pub mod states;
pub mod tabulate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = specfun::GridSpec<f64>;
pub type Frame = modular::ModularFrame<f64>;
pub type Decomposition = modular::ModularDecomposition<f64>;
pub type Report = modular::CriterionReport<f64>;
