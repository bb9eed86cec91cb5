//! Figure-reproduction pipelines, configuration and result persistence.

pub mod cli;
pub mod config;
pub mod output;
pub mod scenarios;
