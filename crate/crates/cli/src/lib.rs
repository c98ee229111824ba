//! Command-line front end for DiffGAD: layered run configuration, a staged
//! and resumable pipeline, and helpers shared by the subcommands.

pub mod config;
pub mod pipeline;
pub mod bench;
pub mod cli;
