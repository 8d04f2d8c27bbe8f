//! Configuration, studies and CSV output for the `curvehedge` binary.

pub mod commands;
pub mod config;
pub mod output;
