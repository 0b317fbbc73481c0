//! File formats, configuration and the `sarforge` command line on top of
//! [`sarforge_core`].
//!
//! Everything here is plumbing: images go through the `image` crate, box
//! and manifest records are JSON Lines, feature sets are CSV or raw
//! little-endian `f64` with a JSON sidecar, and the pipeline configuration
//! is a single TOML file.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;

pub use config::PipelineConfig;
pub use error::{ExitKind, RunError};
