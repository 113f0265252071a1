//! Command-line driver for the towerlab verification suite.

pub mod app;
pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
