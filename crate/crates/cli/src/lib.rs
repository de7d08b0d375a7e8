//! Library surface of the `psvb` command-line tool: container formats,
//! text interchange, chain/denoiser specifications, and the commands
//! themselves. The binary in `main.rs` is a thin argument-parsing shell.

pub mod chainspec;
pub mod commands;
pub mod container;
pub mod denoiser_spec;
pub mod error;
pub mod textio;

pub use error::{CliError, Result};
