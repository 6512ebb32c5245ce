//! Library backing the `baycount` command-line tool: file formats, config
//! resolution, and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod io;
