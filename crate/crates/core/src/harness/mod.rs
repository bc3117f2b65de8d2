//! Checkpoint files, experiment configuration, the two experiment drivers
//! and their reports.

pub mod cache;
pub mod checkpoint;
pub mod config;
mod experiments;
pub mod report;

pub use cache::{model_key, ModelCache, Source, TrainingRecord};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader,
};
pub use config::{DatasetSource, ExperimentConfig, Fixed, Overrides, Profile, Sweep};
pub use experiments::{run_improvement_experiment, run_subset_experiment};
pub use report::{ExperimentKind, ExperimentReport, ReportRow};
