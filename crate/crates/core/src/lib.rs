//! Return-time statistics and Poisson limit checks for maps of the torus.

pub mod approx;
pub mod conditions;
pub mod error;
pub mod experiment;
pub mod returns;
pub mod rng;
pub mod stats;
pub mod systems;
pub mod targets;
pub mod torus;
pub mod trig;

pub use error::{Error, Result};
