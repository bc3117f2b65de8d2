//! Content-addressed checkpoint cache for experiments.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use crate::augment::CropResizeConfig;
use crate::dataio::Dataset;
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::evaluate::Performance;
use crate::training::{pretrain_with, Checkpoint, Exec, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Trained,
    Memory,
    Disk,
}

/// One request for a pre-trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub key: String,
    pub dataset: String,
    pub num_series: usize,
    pub source: Source,
}

fn series_hash(values: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

/// Hash of the pre-training multiset (order-free) and every setting that
/// affects the trained parameters.
pub fn model_key(
    set: &Dataset,
    enc: &EncoderConfig,
    train: &TrainConfig,
    aug: &CropResizeConfig,
) -> Result<String> {
    let mut hashes: Vec<[u8; 32]> = set.train.iter().map(|s| series_hash(&s.values)).collect();
    hashes.sort_unstable();
    let mut h = Sha256::new();
    h.update((hashes.len() as u64).to_le_bytes());
    for s in &hashes {
        h.update(s);
    }
    h.update(serde_json::to_vec(&(enc, train, aug))?);
    Ok(hex::encode(h.finalize()))
}

/// Trains each distinct (data, config) combination at most once.
#[derive(Default)]
pub struct ModelCache {
    dir: Option<PathBuf>,
    models: HashMap<String, Arc<Checkpoint>>,
    performance: HashMap<(String, String), Performance>,
    pub log: Vec<TrainingRecord>,
}

impl ModelCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            ..Self::default()
        }
    }

    pub fn get_or_train(
        &mut self,
        set: &Dataset,
        enc: &EncoderConfig,
        train: &TrainConfig,
        aug: &CropResizeConfig,
        exec: Exec,
    ) -> Result<(String, Arc<Checkpoint>)> {
        let key = model_key(set, enc, train, aug)?;
        let record = |source| TrainingRecord {
            key: key.clone(),
            dataset: set.name.clone(),
            num_series: set.train.len(),
            source,
        };
        if let Some(m) = self.models.get(&key) {
            self.log.push(record(Source::Memory));
            return Ok((key, m.clone()));
        }
        let file = self.dir.as_ref().map(|d| d.join(format!("{key}.tsca")));
        let (ckpt, source) = match &file {
            Some(f) if f.exists() => (load_checkpoint(f)?, Source::Disk),
            _ => {
                info!("pre-training on {} ({} series)", set.name, set.train.len());
                let ckpt = pretrain_with(set, train, enc, aug, exec)?;
                if let Some(f) = &file {
                    save_checkpoint(&ckpt, f)?;
                }
                (ckpt, Source::Trained)
            }
        };
        self.log.push(record(source));
        let ckpt = Arc::new(ckpt);
        self.models.insert(key.clone(), ckpt.clone());
        Ok((key, ckpt))
    }

    /// Memoized downstream performance of a cached model.
    pub fn performance(
        &mut self,
        key: &str,
        tasks_id: &str,
        compute: impl FnOnce() -> Result<Performance>,
    ) -> Result<Performance> {
        let k = (key.to_string(), tasks_id.to_string());
        if let Some(p) = self.performance.get(&k) {
            return Ok(p.clone());
        }
        let p = compute()?;
        self.performance.insert(k, p.clone());
        Ok(p)
    }

    /// Number of times the model with `key` was actually trained.
    pub fn trained_count(&self, key: &str) -> usize {
        self.log
            .iter()
            .filter(|r| r.key == key && r.source == Source::Trained)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::TimeSeries;

    fn set(vals: &[f64]) -> Dataset {
        let train = vals
            .iter()
            .map(|&v| TimeSeries::unlabeled(vec![v; 16]))
            .collect();
        Dataset::new("s", train, Vec::new())
    }

    #[test]
    fn key_ignores_order_but_not_content() {
        let enc = EncoderConfig::tiny();
        let t = TrainConfig::default();
        let a = CropResizeConfig::identity(16);
        let k1 = model_key(&set(&[1.0, 2.0, 3.0]), &enc, &t, &a).unwrap();
        let k2 = model_key(&set(&[3.0, 1.0, 2.0]), &enc, &t, &a).unwrap();
        let k3 = model_key(&set(&[3.0, 1.0, 2.5]), &enc, &t, &a).unwrap();
        let k4 = model_key(&set(&[1.0, 2.0, 3.0, 3.0]), &enc, &t, &a).unwrap();
        let seeded = TrainConfig {
            seed: 1,
            ..t.clone()
        };
        let k5 = model_key(&set(&[1.0, 2.0, 3.0]), &enc, &seeded, &a).unwrap();
        assert_eq!(k1, k2);
        assert_ne!(k1, k3);
        assert_ne!(k1, k4);
        assert_ne!(k1, k5);
    }

    #[test]
    fn second_request_hits_memory() {
        let enc = EncoderConfig::tiny();
        let t = TrainConfig {
            epochs: 1,
            batch: 2,
            warmup_epochs: 0,
            ..TrainConfig::default()
        };
        let a = CropResizeConfig {
            out_len: 16,
            ..CropResizeConfig::default()
        };
        let s = set(&[1.0, -1.0, 0.5]);
        let s: Dataset = Dataset::new(
            "s",
            s.train
                .into_iter()
                .enumerate()
                .map(|(i, mut x)| {
                    x.values[i] += 1.0;
                    x
                })
                .collect(),
            Vec::new(),
        );
        let mut cache = ModelCache::new(None);
        let (k, m1) = cache
            .get_or_train(&s, &enc, &t, &a, Exec::default())
            .unwrap();
        let (_, m2) = cache
            .get_or_train(&s, &enc, &t, &a, Exec::default())
            .unwrap();
        assert!(Arc::ptr_eq(&m1, &m2));
        assert_eq!(cache.trained_count(&k), 1);
        assert_eq!(cache.log[1].source, Source::Memory);
    }
}
