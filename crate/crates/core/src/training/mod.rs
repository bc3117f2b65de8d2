//! Contrastive pre-training: similarity and InfoNCE, AdamW with a warmup +
//! cosine schedule, and the epoch loop that produces a [`Checkpoint`].

mod optim;
pub mod similarity;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_crop, CropResizeConfig};
use crate::dataio::Dataset;
use crate::encoder::{
    init_params, loss_and_gradients, EncoderConfig, EncoderParams, LossOptions, Tensor,
};
use crate::error::{Error, Result};
use crate::rng::{self, domain};

pub use optim::{adamw_update, AdamWConfig, LrSchedule, OptimizerState};
pub use similarity::{cosine_similarity, info_nce, info_nce_with_grad, similarity_rows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub warmup_epochs: usize,
    pub temperature: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Add the loss with query and key views swapped.
    pub symmetric_loss: bool,
    /// Drop the final short batch of each epoch.
    pub drop_last: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            epochs: 500,
            batch: 64,
            warmup_epochs: 10,
            temperature: 0.1,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            symmetric_loss: false,
            drop_last: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("train.temperature must be positive".into()));
        }
        if self.batch < 2 {
            return Err(Error::Config("train.batch must be at least 2".into()));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "train.warmup_epochs ({}) must be below train.epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr: self.lr,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs,
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Learning rate for `epoch` under `cfg`'s warmup + cosine schedule.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.schedule().lr_at(epoch)
}

/// How work inside a step is executed. Results are identical for any
/// `jobs`; `deterministic` additionally pins execution to one thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exec {
    pub jobs: usize,
    pub deterministic: bool,
}

impl Default for Exec {
    fn default() -> Self {
        Self {
            jobs: 1,
            deterministic: true,
        }
    }
}

impl Exec {
    pub fn threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.jobs.max(1)
        }
    }
}

/// Where a set of parameters came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub num_series: usize,
    pub train: TrainConfig,
    pub augment: CropResizeConfig,
    pub seed: u64,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Trained parameters plus the provenance needed to reproduce them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub provenance: Provenance,
}

/// Pre-trains with default augmentation and single-threaded execution.
pub fn pretrain(set: &Dataset, cfg: &TrainConfig, enc: &EncoderConfig) -> Result<Checkpoint> {
    let aug = CropResizeConfig {
        out_len: enc.seq_len,
        ..Default::default()
    };
    pretrain_with(set, cfg, enc, &aug, Exec::default())
}

fn apply_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    let g: Vec<&Tensor> = grads.named_tensors().into_iter().map(|(_, t)| t).collect();
    adamw_update(&mut params.tensors_mut(), &g, state, lr, cfg)?;
    params.round_to_f32();
    Ok(())
}

pub fn pretrain_with(
    set: &Dataset,
    cfg: &TrainConfig,
    enc: &EncoderConfig,
    aug: &CropResizeConfig,
    exec: Exec,
) -> Result<Checkpoint> {
    cfg.validate()?;
    aug.validate()?;
    let n = set.train.len();
    if n == 0 {
        return Err(Error::arg(format!(
            "pre-training set {} is empty",
            set.name
        )));
    }
    if let Some(bad) = set.train.iter().position(|s| s.values.len() != enc.seq_len) {
        return Err(Error::arg(format!(
            "series {bad} of {} has length {}, encoder expects {}",
            set.name,
            set.train[bad].values.len(),
            enc.seq_len
        )));
    }
    if aug.out_len != enc.seq_len {
        return Err(Error::Config(
            "augment.out_len must equal encoder.seq_len".into(),
        ));
    }
    let mut params = init_params(enc, cfg.seed)?;
    let mut state = OptimizerState::new();
    let adamw = cfg.adamw();
    let opts = LossOptions {
        temperature: cfg.temperature,
        symmetric: cfg.symmetric_loss,
        jobs: exec.threads(),
    };
    let batch = cfg.batch.min(n);
    if cfg.epochs > 0 && batch < 2 {
        return Err(Error::arg(format!(
            "pre-training set {} has a single series",
            set.name
        )));
    }

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[domain::SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        let mut steps = 0usize;
        for ids in order.chunks(batch) {
            if ids.len() < 2 || (cfg.drop_last && ids.len() < batch) {
                continue;
            }
            let series: Vec<&[f64]> = ids
                .iter()
                .map(|&i| set.train[i].values.as_slice())
                .collect();
            let mut first = Vec::with_capacity(ids.len());
            let mut second = Vec::with_capacity(ids.len());
            for &i in ids {
                let mut r = rng::stream(cfg.seed, &[domain::CROP, epoch as u64, i as u64]);
                first.push(sample_crop(&mut r, aug, enc.seq_len));
                second.push(sample_crop(&mut r, aug, enc.seq_len));
            }
            first.extend(second);
            let (loss, grads) = loss_and_gradients(&params, &series, &first, &opts)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("contrastive loss at epoch {epoch}"),
                });
            }
            apply_step(&mut params, &grads, &mut state, lr, &adamw)?;
            total += loss;
            steps += 1;
        }
        let mean = if steps > 0 {
            total / steps as f64
        } else {
            f64::NAN
        };
        debug!("{}: epoch {epoch} lr {lr:.3e} loss {mean:.4}", set.name);
        if epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs {
            info!(
                "{}: epoch {}/{} loss {mean:.4}",
                set.name,
                epoch + 1,
                cfg.epochs
            );
        }
        epoch_losses.push(mean);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite {
            stage: "parameters after training".into(),
        });
    }
    Ok(Checkpoint {
        params,
        provenance: Provenance {
            dataset: set.name.clone(),
            num_series: n,
            train: cfg.clone(),
            augment: *aug,
            seed: cfg.seed,
            epochs_run: cfg.epochs,
            final_loss: epoch_losses.last().copied().filter(|l| l.is_finite()),
            epoch_losses,
        },
    })
}
