//! Experiment harness: dataset ingestion, occlusion, the retrieval
//! experiment battery and CSV/JSON reporting.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod experiments;
pub mod occlusion;
pub mod output;
pub mod pipeline;

pub use config::{CodecKind, Experiment, ExperimentConfig, FixtureKind};
pub use output::{RunOutput, Table};
