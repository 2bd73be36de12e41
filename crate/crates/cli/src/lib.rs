//! Command-line front end: experiment configs, trial harness, table
//! reproduction and the instance assumption checks.

pub mod commands;
pub mod config;
pub mod error;
pub mod harness;
pub mod validate;
