//! Dynamic delivery pooling: reward topologies, greedy index policies, batching
//! policies, exact offline solvers, and regret bound verification.
//!
//! The crate is `no_std` + `alloc`; anything that needs files, clocks, or
//! threads lives in the companion `pooling-lab` crate.
//!
//! Modules:
//! - [`topology`]: job types, pairwise rewards, potentials.
//! - [`instance`]: arrival sequences, criticality models, generators,
//!   adversarial constructors.
//! - [`offline`]: hindsight optimum (blossom), LP relaxation and duals,
//!   marginal loss/gain.
//! - [`engine`]: the online dispatch loop and its trace.
//! - [`policies`]: index rules (GRE, PB, HD, AD) and batching rules
//!   (BAT, RBAT, PRBAT), price tables, gamma tuning.
//! - [`metrics`]: per-run metrics and sweep aggregation.
//! - [`verify`]: theorem and lower-bound construction checks.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod engine;
pub mod error;
pub mod instance;
pub mod metrics;
pub mod offline;
pub mod policies;
pub mod topology;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
