//! Tick-file ingestion, on-disk formats and the batch pipeline built on
//! `tickbound-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod pipeline;

pub use config::{PipelineConfig, Setting};
pub use error::{Error, Result};
pub use pipeline::{run_all, RunManifest, RunOptions};
