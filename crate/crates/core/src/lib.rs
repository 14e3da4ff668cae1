//! Monte Carlo simulation of non-Hermitian dynamics on small spin chains.
//!
//! A GKSL channel is realized as the noise average of stochastically driven
//! Trotterized unitaries; its quantum-jump part is then cancelled in continuous
//! time by a signed quasi-probability jump process, leaving the non-Hermitian
//! target evolution up to a normalization that drops out of ratio estimates.

pub mod bounds;
pub mod channel;
pub mod config;
pub mod error;
pub mod estimator;
pub mod model;
pub mod nonherm;
pub mod numerics;
pub mod output;
pub mod qem;
pub mod reference;
pub mod runner;

pub use error::{Error, Result};
