//! Deterministic torus-grid multi-agent simulator and a cooperative team strategy.
//!
//! Everything here is pure: no IO, no clocks, no global state. Randomness is a
//! seeded ChaCha stream owned by the world. The `gridcoop` crate adds logging,
//! the plan cache directory and the command line.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod torus;
pub mod world;
pub mod identity;
pub mod mapping;
pub mod mergecheck;
pub mod plan_cache;
pub mod planner;
pub mod team;
pub mod opponents;
pub mod sim;
pub mod scenario;
