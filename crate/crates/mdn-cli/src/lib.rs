//! IO companion to `mdn-core`: CSV ingestion, the text checkpoint format,
//! run configuration, and report serialization for the `mdn` binary.

pub mod checkpoint;
pub mod config;
pub mod csv_io;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use config::{ConfigError, RunConfig};
