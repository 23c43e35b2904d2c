//! Command-line front end: configuration, data files and the experiment
//! commands behind the `gbridge` binary.

pub mod commands;
pub mod config;
pub mod io;
