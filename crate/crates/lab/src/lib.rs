//! Std companion to `b92-core`: multi-threaded trial execution, parameter
//! sweeps, JSON config files and CSV/JSON reports. The `b92lab` binary is a
//! thin wrapper over [`cli::run`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod runner;

mod error;

pub use error::{LabError, Result};
