//! Command-line driver and review HTTP API for run directories.

pub mod api;
pub mod cli;
