//! Experiment front end: configuration, the subcommand implementations,
//! and coverage measurement. The binary in `main.rs` is a thin argument
//! parser over [`commands`]; everything here is callable as a library so
//! tests can drive full experiments in-process.

pub mod commands;
pub mod config;
pub mod coverage;
