//! Downstream evaluation: a norm + linear classification head on top of the
//! encoder, trained with softmax cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, TimeSeries};
use crate::encoder::{
    backward_encoder, encode, encode_with_tape, Dense, EncoderParams, Norm, Tensor,
};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::linalg;
use crate::rng::{self, domain};
use crate::training::{adamw_update, AdamWConfig, Checkpoint, LrSchedule, OptimizerState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    /// Train only the head on fixed embeddings.
    pub freeze_encoder: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            epochs: 500,
            batch: 256,
            warmup_epochs: 10,
            weight_decay: 0.05,
            freeze_encoder: false,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("probe.lr must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("probe.batch must be positive".into()));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "probe.warmup_epochs ({}) must be below probe.epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        Ok(())
    }

    fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr: self.lr,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs,
        }
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            ..Default::default()
        }
    }
}

/// Linear classifier with an input norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeHead {
    pub norm: Norm,
    pub linear: Dense,
}

impl ProbeHead {
    pub fn init(dim: usize, classes: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut r = rng::stream(seed, &[domain::PROBE_INIT]);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut linear = Dense::zeros(classes, dim);
        linear
            .weight
            .data
            .iter_mut()
            .for_each(|w| *w = r.gen_range(-bound..bound));
        Self {
            norm: Norm::new(dim),
            linear,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            norm: Norm::zeros(self.norm.gamma.len()),
            linear: Dense::zeros(self.linear.out_dim(), self.linear.in_dim()),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.norm.gamma,
            &mut self.norm.beta,
            &mut self.linear.weight,
            &mut self.linear.bias,
        ]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.norm.gamma,
            &self.norm.beta,
            &self.linear.weight,
            &self.linear.bias,
        ]
    }

    fn add_assign(&mut self, other: &ProbeHead) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            linalg::add_assign(&mut a.data, &b.data);
        }
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        let (mean, rstd) = moments(features);
        let normed: Vec<f64> = features
            .iter()
            .enumerate()
            .map(|(j, v)| (v - mean) * rstd * self.norm.gamma.data[j] + self.norm.beta.data[j])
            .collect();
        affine(&self.linear, &normed)
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        linalg::argmax(&self.logits(features))
    }

    /// Cross-entropy of one example; accumulates head gradients into `g` and
    /// returns the gradient with respect to the features.
    fn backward(
        &self,
        features: &[f64],
        label: usize,
        scale: f64,
        g: &mut ProbeHead,
    ) -> (f64, Vec<f64>) {
        let dim = features.len();
        let (mean, rstd) = moments(features);
        let xhat: Vec<f64> = features.iter().map(|v| (v - mean) * rstd).collect();
        let normed: Vec<f64> = (0..dim)
            .map(|j| xhat[j] * self.norm.gamma.data[j] + self.norm.beta.data[j])
            .collect();
        let mut p = affine(&self.linear, &normed);
        let loss = linalg::log_sum_exp(&p) - p[label];
        linalg::softmax_in_place(&mut p);
        p[label] -= 1.0;
        p.iter_mut().for_each(|v| *v *= scale);

        let classes = p.len();
        let mut dnormed = vec![0.0; dim];
        for c in 0..classes {
            g.linear.bias.data[c] += p[c];
            let row = &self.linear.weight.data[c * dim..(c + 1) * dim];
            let grow = &mut g.linear.weight.data[c * dim..(c + 1) * dim];
            for j in 0..dim {
                grow[j] += p[c] * normed[j];
                dnormed[j] += p[c] * row[j];
            }
        }
        let mut dxhat = vec![0.0; dim];
        for j in 0..dim {
            g.norm.gamma.data[j] += dnormed[j] * xhat[j];
            g.norm.beta.data[j] += dnormed[j];
            dxhat[j] = dnormed[j] * self.norm.gamma.data[j];
        }
        let md = dxhat.iter().sum::<f64>() / dim as f64;
        let mdx = linalg::dot(&dxhat, &xhat) / dim as f64;
        let dx = (0..dim)
            .map(|j| rstd * (dxhat[j] - md - xhat[j] * mdx))
            .collect();
        (loss, dx)
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + 1e-5).sqrt())
}

fn affine(d: &Dense, x: &[f64]) -> Vec<f64> {
    let dim = d.in_dim();
    (0..d.out_dim())
        .map(|c| d.bias.data[c] + linalg::dot(&d.weight.data[c * dim..(c + 1) * dim], x))
        .collect()
}

/// Train and test accuracy of one downstream task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub task: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Single-class task: accuracies are trivially 1 and excluded from averages.
    pub degenerate: bool,
}

fn labels_of(split: &[TimeSeries], task: &str) -> Result<Vec<usize>> {
    split
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label
                .ok_or_else(|| Error::arg(format!("{task}: series {i} has no label")))
        })
        .collect()
}

fn accuracy(pred: impl Iterator<Item = usize>, labels: &[usize]) -> f64 {
    let hits = pred.zip(labels).filter(|(p, l)| p == *l).count();
    hits as f64 / labels.len() as f64
}

fn batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(
        seed,
        &[domain::PROBE_SHUFFLE, epoch as u64],
    ));
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// Fits a head on fixed features with mini-batch AdamW.
pub fn fit_head_on_features(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeHead> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::arg("probe needs one label per feature vector"));
    }
    let dim = features[0].len();
    let mut head = ProbeHead::init(dim, num_classes, cfg.seed);
    let mut state = OptimizerState::new();
    let sched = cfg.schedule();
    for epoch in 0..cfg.epochs {
        let lr = sched.lr_at(epoch);
        for ids in batches(features.len(), cfg.batch, cfg.seed, epoch) {
            let mut g = head.zeros_like();
            let scale = 1.0 / ids.len() as f64;
            for &i in &ids {
                head.backward(&features[i], labels[i], scale, &mut g);
            }
            adamw_update(
                &mut head.tensors_mut(),
                &g.tensors(),
                &mut state,
                lr,
                &cfg.adamw(),
            )?;
        }
    }
    Ok(head)
}

/// Attaches a fresh head to a copy of the checkpoint's encoder, trains on
/// `task.train` and reports accuracy on both splits.
pub fn fit_probe(ckpt: &Checkpoint, task: &Dataset, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    fit_probe_jobs(&ckpt.params, task, cfg, 1)
}

pub fn fit_probe_jobs(
    params: &EncoderParams,
    task: &Dataset,
    cfg: &ProbeConfig,
    jobs: usize,
) -> Result<ProbeOutcome> {
    cfg.validate()?;
    if task.train.is_empty() || task.test.is_empty() {
        return Err(Error::arg(format!(
            "{}: probe needs both a train and a test split",
            task.name
        )));
    }
    let train_labels = labels_of(&task.train, &task.name)?;
    let test_labels = labels_of(&task.test, &task.name)?;
    let distinct = {
        let mut l = train_labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    if task.num_classes < 2 || distinct < 2 {
        return Ok(ProbeOutcome {
            task: task.name.clone(),
            train_accuracy: 1.0,
            test_accuracy: 1.0,
            degenerate: true,
        });
    }
    let num_classes = task.num_classes.max(
        1 + train_labels
            .iter()
            .chain(&test_labels)
            .max()
            .copied()
            .unwrap_or(0),
    );
    let embed = |p: &EncoderParams, split: &[TimeSeries]| -> Result<Vec<Vec<f64>>> {
        par_map(jobs, split, |s| encode(p, &s.values).map(|e| e.0))
            .into_iter()
            .collect()
    };

    let (params, head) = if cfg.freeze_encoder {
        let feats = embed(params, &task.train)?;
        let head = fit_head_on_features(&feats, &train_labels, num_classes, cfg)?;
        (params.clone(), head)
    } else {
        fine_tune(params, &task.train, &train_labels, num_classes, cfg, jobs)?
    };

    let train_feats = embed(&params, &task.train)?;
    let test_feats = embed(&params, &task.test)?;
    Ok(ProbeOutcome {
        task: task.name.clone(),
        train_accuracy: accuracy(train_feats.iter().map(|f| head.predict(f)), &train_labels),
        test_accuracy: accuracy(test_feats.iter().map(|f| head.predict(f)), &test_labels),
        degenerate: false,
    })
}

const PROBE_CHUNK: usize = 8;

fn fine_tune(
    init: &EncoderParams,
    split: &[TimeSeries],
    labels: &[usize],
    num_classes: usize,
    cfg: &ProbeConfig,
    jobs: usize,
) -> Result<(EncoderParams, ProbeHead)> {
    let mut params = init.clone();
    let mut head = ProbeHead::init(params.config.token_dim, num_classes, cfg.seed);
    let mut enc_state = OptimizerState::new();
    let mut head_state = OptimizerState::new();
    let sched = cfg.schedule();
    let adamw = cfg.adamw();
    for epoch in 0..cfg.epochs {
        let lr = sched.lr_at(epoch);
        for ids in batches(split.len(), cfg.batch, cfg.seed, epoch) {
            let scale = 1.0 / ids.len() as f64;
            let chunks: Vec<&[usize]> = ids.chunks(PROBE_CHUNK).collect();
            let mut g_enc = params.zeros_like();
            let mut g_head = head.zeros_like();
            for wave in chunks.chunks(jobs.max(1)) {
                let partial = par_map(jobs, wave, |idx| -> Result<(EncoderParams, ProbeHead)> {
                    let mut ge = params.zeros_like();
                    let mut gh = head.zeros_like();
                    for &i in idx.iter() {
                        let (e, tape) = encode_with_tape(&params, &split[i].values)?;
                        let (_, de) = head.backward(&e.0, labels[i], scale, &mut gh);
                        backward_encoder(&params, &tape, &de, &mut ge);
                    }
                    Ok((ge, gh))
                });
                for part in partial {
                    let (ge, gh) = part?;
                    g_enc.add_assign(&ge);
                    g_head.add_assign(&gh);
                }
            }
            // the projector takes no part in classification and stays frozen
            let (backbone, _) = params.tensors_mut_split();
            let mut backbone = backbone;
            let grads: Vec<&Tensor> = {
                let all = g_enc.named_tensors();
                let n = backbone.len();
                all.into_iter().take(n).map(|(_, t)| t).collect()
            };
            adamw_update(&mut backbone, &grads, &mut enc_state, lr, &adamw)?;
            adamw_update(
                &mut head.tensors_mut(),
                &g_head.tensors(),
                &mut head_state,
                lr,
                &adamw,
            )?;
        }
    }
    Ok((params, head))
}
