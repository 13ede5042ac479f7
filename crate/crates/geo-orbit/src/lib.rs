//! File formats, run configuration and the command-line workflow around
//! [`geo_orbit_core`].

#![forbid(unsafe_code)]

pub mod cli;
pub mod config;
pub mod error;
pub mod geojson;
pub mod io;
pub mod workflow;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
