//! Library side of the `edwait` command-line tool.

pub mod config;
pub mod pipeline;
