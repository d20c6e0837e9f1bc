//! Work-optimal finite-time protocols for a single-electron Szilard engine.
//!
//! A quantum dot coupled to one reservoir is measured, and the dot level βε(t)
//! is then driven to extract work from the measured bit. This crate contains
//!
//! - the rate model and exact propagation of the occupation ([`engine`]),
//! - the Euler–Lagrange optimal protocols and a brute-force check ([`optimal`]),
//! - an exact jump-process simulator of the full cycle ([`sim`]),
//! - work, power, fluctuation and estimator statistics ([`stats`]),
//! - duration sweeps and calibration-drift sensitivity ([`analysis`]),
//! - the CSV/JSON file formats ([`io`]),
//! - independent numerical checks of all of the above ([`validation`]).
//!
//! All quantities are reduced: energies are multiplied by β = 1/k_B T and
//! times by γ = Γ_out.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod io;
pub mod numeric;
pub mod optimal;
pub mod params;
pub mod protocol;
pub mod sim;
pub mod stats;
pub mod validation;

pub use engine::{
    conditional_propagator, equilibrium_occupation, fermi, propagate_constant, propagate_protocol, rates, RateModel,
    DEFAULT_GRID_POINTS,
};
pub use error::{Error, Result};
pub use optimal::{
    build_optimal_protocol, build_optimal_protocol_with, naive_ramp, optimize_kappa, ElConstant, OptimalSolution,
    SolverSettings,
};
pub use params::{Branch, EnergyGap, LeverArm, OccupationProbability, PhysicalParams};
pub use protocol::{ControlSchedule, Protocol, Segment, ShiftModel};
pub use sim::{CycleEngine, CycleResult, SeededRun, TrajectorySample};
pub use stats::{EnginePerformance, VarianceEstimate, WorkStatistics};
