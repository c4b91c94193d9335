//! File formats, configuration and subcommands behind the `fanscatter` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod raster;

pub use config::EngineConfig;
pub use error::{CliError, CliResult};
pub use raster::RawRaster;
