//! Command-line pipeline: dataset layout, configuration and subcommands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod plot;
pub mod staging;
