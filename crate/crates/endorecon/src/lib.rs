//! File formats, configuration and the stage driver around
//! [`endorecon_core`].
//!
//! The `endorecon` binary wraps [`pipeline::execute`]; everything it does is
//! also reachable from here.

pub mod config;
pub mod error;
pub mod frames;
pub mod images;
pub mod manifest;
pub mod npy;
pub mod pipeline;
pub mod ply;
pub mod report;
pub mod synth_io;

pub use endorecon_core as core;
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::{execute, Command, RunSummary};
