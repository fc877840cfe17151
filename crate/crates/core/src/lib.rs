//! Trace-driven emulation of LEO satellite constellations.
//!
//! Orbits are propagated offline into a compact trace of per-step topology
//! diffs; the engine replays that trace against a backend (an in-process
//! graph, a recording stub, or Linux network namespaces) in real time.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod backends;
pub mod bench;
pub mod cli;
pub mod engine;
pub mod error;
pub mod geo;
pub mod orbits;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
