//! Volt-VAR control benchmark.
//!
//! A balanced radial distribution-feeder simulator (branch-flow power flow,
//! tap changers, switched capacitors), the default local device control, a
//! load time-series pipeline, a non-episodic Gym-like control environment
//! and a factored deep Q-learning baseline with an experiment harness.

pub mod agent;
pub mod bench;
pub mod control;
pub mod env;
mod error;
pub mod feeder;
pub mod loads;
pub mod powerflow;

pub use error::{Error, Result};
