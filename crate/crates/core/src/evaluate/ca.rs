//! Contrastive accuracy: the fraction of examples whose two augmented views
//! are each other's nearest neighbour (by cosine similarity of projections)
//! within their evaluation batch.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_crop_resize, sample_crop, CropDraw, CropResizeConfig};
use crate::dataio::TimeSeries;
use crate::encoder::{encode, project, EncoderParams};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::linalg;
use crate::rng::{self, domain};
use crate::training::{similarity_rows, Checkpoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CAConfig {
    /// Monte-Carlo draw pairs averaged over.
    pub draws: usize,
    pub eval_batch: usize,
    pub seed: u64,
}

impl Default for CAConfig {
    fn default() -> Self {
        Self {
            draws: 10,
            eval_batch: 256,
            seed: 0,
        }
    }
}

impl CAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("ca.draws must be at least 1".into()));
        }
        if self.eval_batch < 2 {
            return Err(Error::Config("ca.eval_batch must be at least 2".into()));
        }
        Ok(())
    }
}

/// Maps an augmented view to the space similarities are measured in.
pub trait ViewProjector: Sync {
    fn project_view(&self, view: &[f64]) -> Result<Vec<f64>>;
}

impl ViewProjector for EncoderParams {
    fn project_view(&self, view: &[f64]) -> Result<Vec<f64>> {
        project(self, &encode(self, view)?)
    }
}

impl<F> ViewProjector for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn project_view(&self, view: &[f64]) -> Result<Vec<f64>> {
        self(view)
    }
}

/// Rows `i` of the similarity matrix whose largest entry (lowest index on
/// ties) sits on the diagonal.
pub fn diagonal_matches<R: AsRef<[f64]>>(first: &[R], second: &[R]) -> Result<usize> {
    let sim = similarity_rows(first, second)?;
    Ok(sim
        .iter()
        .enumerate()
        .filter(|(i, row)| linalg::argmax(row) == *i)
        .count())
}

/// Contrastive accuracy of a trained checkpoint on an unlabeled evaluation
/// pool, using the augmentation family the checkpoint was trained with.
pub fn contrastive_accuracy(
    ckpt: &Checkpoint,
    eval_set: &[TimeSeries],
    cfg: &CAConfig,
) -> Result<f64> {
    contrastive_accuracy_jobs(ckpt, eval_set, cfg, 1)
}

pub fn contrastive_accuracy_jobs(
    ckpt: &Checkpoint,
    eval_set: &[TimeSeries],
    cfg: &CAConfig,
    jobs: usize,
) -> Result<f64> {
    let series: Vec<&[f64]> = eval_set.iter().map(|s| s.values.as_slice()).collect();
    contrastive_accuracy_with(&ckpt.params, &series, &ckpt.provenance.augment, cfg, jobs)
}

/// Disjoint batches of pool indices used in one round; a final batch with
/// fewer than two examples is dropped.
pub fn ca_round_batches(n: usize, cfg: &CAConfig, round: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(
        cfg.seed,
        &[domain::CA_SHUFFLE, round as u64],
    ));
    order
        .chunks(cfg.eval_batch.max(1))
        .filter(|b| b.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Query and key crops of example `i` in one round.
pub fn ca_view_crops(
    aug: &CropResizeConfig,
    cfg: &CAConfig,
    round: usize,
    i: usize,
    len: usize,
) -> (CropDraw, CropDraw) {
    let mut r = rng::stream(cfg.seed, &[domain::CA_CROP, round as u64, i as u64]);
    let phi = sample_crop(&mut r, aug, len);
    let psi = sample_crop(&mut r, aug, len);
    (phi, psi)
}

/// The estimator itself, over any projector.
///
/// For each of `cfg.draws` rounds the pool is shuffled and split into
/// disjoint batches of `eval_batch` (a final batch is kept when it holds at
/// least two examples). Every example gets fresh query and key crops; the
/// round's accuracy is matches over counted examples, and rounds are averaged.
pub fn contrastive_accuracy_with<P: ViewProjector + ?Sized, S: AsRef<[f64]> + Sync>(
    model: &P,
    series: &[S],
    aug: &CropResizeConfig,
    cfg: &CAConfig,
    jobs: usize,
) -> Result<f64> {
    cfg.validate()?;
    let n = series.len();
    if n < 2 {
        return Err(Error::arg(format!(
            "contrastive accuracy needs at least 2 series, got {n}"
        )));
    }
    let mut total = 0.0;
    for round in 0..cfg.draws {
        let batches = ca_round_batches(n, cfg, round);
        let counts = par_map(jobs, &batches, |ids| -> Result<(usize, usize)> {
            let mut first = Vec::with_capacity(ids.len());
            let mut second = Vec::with_capacity(ids.len());
            for &i in ids.iter() {
                let s = series[i].as_ref();
                let (phi, psi) = ca_view_crops(aug, cfg, round, i, s.len());
                first.push(model.project_view(&apply_crop_resize(&phi, s)?)?);
                second.push(model.project_view(&apply_crop_resize(&psi, s)?)?);
            }
            Ok((diagonal_matches(&first, &second)?, ids.len()))
        });
        let (mut matched, mut counted) = (0, 0);
        for c in counts {
            let (m, k) = c?;
            matched += m;
            counted += k;
        }
        total += matched as f64 / counted as f64;
    }
    Ok(total / cfg.draws as f64)
}
