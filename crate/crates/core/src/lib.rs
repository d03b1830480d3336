//! Core of stkit: the atomic-file data contract and everything that turns it
//! into forecasts and scores.
//!
//! * [`atomic`] reads, writes and validates atomic files.
//! * [`tensorize`] turns validated tables into dense tensors, adjacency
//!   matrices and trajectories.
//! * [`pipeline`] scales, splits, windows and batches.
//! * [`baselines`] holds the classic forecasters (HA, VAR, persistence).
//! * [`mapmatch`] is the HMM map matcher.
//! * [`evaluate`] computes regression, ranking and map-matching metrics.
//!
//! Data-parallel loops go through [`Execution`], which falls back to
//! sequential code when the `parallel` feature is off.

pub mod atomic;
pub mod baselines;
pub mod evaluate;
pub mod exec;
pub mod mapmatch;
pub mod pipeline;
pub mod tensorize;

pub use exec::Execution;
