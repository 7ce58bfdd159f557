//! Command-line experiments for the readout-resonator LRU: configuration,
//! presets, a rayon executor and the output writers around `reslru-core`.

#![forbid(unsafe_code)]
#![warn(missing_debug_implementations, rust_2018_idioms)]

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod presets;

pub use error::{CliError, Result};
