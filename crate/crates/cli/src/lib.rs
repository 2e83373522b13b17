//! Configuration-driven runner for the `kato` command-line tool.

pub mod config;
pub mod error;
pub mod fd;
pub mod runner;
pub mod suite;
