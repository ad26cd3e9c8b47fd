//! Simulation and optimal control of laser-driven spin transfer in the
//! nitrogen-vacancy center.

pub mod cli;
pub mod config;
pub mod error;
pub mod grape;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod liouville;
pub mod model;
pub mod pulses;
pub mod simplex;
pub mod units;

pub use error::{Error, Result};
