//! Command implementations behind the `epochgraph` binary.

pub mod commands;
pub mod config;
pub mod pipeline;
