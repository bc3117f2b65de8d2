//! Contrastive accuracy, downstream probing and correlation statistics.

mod ca;
mod probe;
mod stats;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::training::Checkpoint;

pub use ca::{
    ca_round_batches, ca_view_crops, contrastive_accuracy, contrastive_accuracy_jobs,
    contrastive_accuracy_with, diagonal_matches, CAConfig, ViewProjector,
};
pub use probe::{
    fit_head_on_features, fit_probe, fit_probe_jobs, ProbeConfig, ProbeHead, ProbeOutcome,
};
pub use stats::pearson;

/// Mean downstream accuracy over a task collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub p_train: f64,
    pub p_test: f64,
    pub tasks: Vec<ProbeOutcome>,
}

/// Unweighted mean of per-task accuracies; every probe starts from the
/// checkpoint. Degenerate (single-class) tasks are left out of the mean
/// unless nothing else remains.
pub fn avg_performance(
    ckpt: &Checkpoint,
    tasks: &[Dataset],
    cfg: &ProbeConfig,
) -> Result<Performance> {
    avg_performance_jobs(&ckpt.params, tasks, cfg, 1)
}

pub fn avg_performance_jobs(
    params: &EncoderParams,
    tasks: &[Dataset],
    cfg: &ProbeConfig,
    jobs: usize,
) -> Result<Performance> {
    if tasks.is_empty() {
        return Err(Error::arg("no downstream tasks"));
    }
    let outcomes = tasks
        .iter()
        .map(|t| fit_probe_jobs(params, t, cfg, jobs))
        .collect::<Result<Vec<_>>>()?;
    let mut kept: Vec<&ProbeOutcome> = outcomes.iter().filter(|o| !o.degenerate).collect();
    if kept.is_empty() {
        kept = outcomes.iter().collect();
    }
    // fixed summation order keeps the mean independent of task order
    let mut train: Vec<f64> = kept.iter().map(|o| o.train_accuracy).collect();
    let mut test: Vec<f64> = kept.iter().map(|o| o.test_accuracy).collect();
    train.sort_by(f64::total_cmp);
    test.sort_by(f64::total_cmp);
    let n = kept.len() as f64;
    Ok(Performance {
        p_train: train.iter().sum::<f64>() / n,
        p_test: test.iter().sum::<f64>() / n,
        tasks: outcomes,
    })
}
