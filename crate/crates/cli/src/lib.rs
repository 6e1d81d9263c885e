//! Scenario configuration, result emission and the command implementations
//! behind the `orbiflow` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
