//! Quantum trajectories for a driven cavity and two-level system coupled to
//! a waveguide loop with time-delayed coherent feedback (one excitation in
//! the cavity, at most one photon in the loop).

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod config;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod fast;
pub mod history;
pub mod jumps;
pub mod kernel;
pub mod output;
pub mod params;
pub mod state;

pub type C64 = nalgebra::Complex<f64>;

pub use engine::{run_ensemble, run_trajectory, EnsembleResult, RunConfig, Sample, SweepAxis, SweepRow};
pub use error::{Result, SimError};
pub use params::{ModelVariant, SystemParams};
pub use state::InitialState;
