//! Empirical coordination through implicit communication.
//!
//! A source `X` is observed by a first controller that emits actions `A`;
//! a second controller sees only `A` (possibly with delay) and emits `B`.
//! This crate decides which joint behaviours `p(x,a,b)` are achievable under
//! each delay regime, optimizes average rewards over those sets, and runs the
//! random-coding constructions that achieve them as seeded simulations.
//!
//! - [`probability`]: tables and information measures (bits).
//! - [`coordination`]: feasibility predicates per delay regime.
//! - [`optimizer`]: reward maximization and exhaustive finite-horizon oracles.
//! - [`schemes`]: codebook and block-Markov binning simulators.
//! - [`game`]: repeated-game harness with enforced information constraints.

pub mod coordination;
pub mod error;
pub mod game;
pub mod optimizer;
pub mod probability;
pub mod rng;
pub mod schemes;
pub mod target;

pub use error::{CoordError, Result};
