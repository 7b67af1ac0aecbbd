//! Data ingestion, model files, workloads and the evaluation harness around
//! `sspn-core`.

pub mod bench;
pub mod catalog;
pub mod dictionary;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model_file;
pub mod oracle;
pub mod schema;
pub mod synth;
pub mod workload;

pub use error::{Error, Result};
