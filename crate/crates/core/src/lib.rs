//! Simulation of a quantum battery built from coupled transmon qubits charged
//! by a single resonator mode, with resonator loss, collective relaxation and
//! collective dephasing.
//!
//! Layers, bottom up: [`circuit`] turns circuit elements into model
//! parameters, [`hilbert`] supplies the truncated operator algebra, [`model`]
//! assembles Hamiltonians, [`dynamics`] integrates the master equation,
//! [`metrics`] reduces trajectories to battery observables and
//! [`experiments`] drives the sweeps behind each dataset.

pub mod circuit;
pub mod cli;
pub mod config;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod output;
pub mod sparse;

pub use error::{Error, Result};
