//! Experiment harness on top of `stkit-core`: layered configuration, the
//! `run` pipeline for each task, grid and random hyper-parameter search,
//! leaderboards, dataset commands and synthetic data generation.

pub mod commands;
pub mod config;
pub mod error;
pub mod leaderboard;
pub mod ranking;
pub mod runner;
pub mod search;
pub mod synthetic;

pub use config::{load_config, Config, Layer};
pub use error::{BenchError, Result};
pub use runner::{cmd_run, RunRecord, Task};
