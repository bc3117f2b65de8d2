//! Subset-ratio and pre-training-set improvement experiments.

use std::collections::HashMap;
use std::time::Instant;

use indexmap::IndexMap;
use log::info;
use serde_json::{json, Value};

use super::cache::ModelCache;
use super::config::{ExperimentConfig, Fixed};
use super::report::{ExperimentKind, ExperimentReport, ReportRow};
use crate::dataio::{subsample_dataset, union_datasets, Dataset};
use crate::error::{Error, Result};
use crate::evaluate::{avg_performance_jobs, contrastive_accuracy_jobs, Performance};
use crate::rng::{self, domain};
use crate::training::Checkpoint;

fn details(pairs: Vec<(&str, Value)>) -> IndexMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn load_all(cfg: &ExperimentConfig, names: &[String]) -> Result<Vec<Dataset>> {
    names.iter().map(|n| cfg.load_dataset(n)).collect()
}

fn performance_of(
    cache: &mut ModelCache,
    key: &str,
    model: &Checkpoint,
    tasks: &[Dataset],
    cfg: &ExperimentConfig,
) -> Result<Performance> {
    let jobs = cfg.exec().threads();
    cache.performance(key, "downstream", || {
        avg_performance_jobs(&model.params, tasks, &cfg.probe, jobs)
    })
}

/// Pre-trains on growing random subsets of one dataset and relates CA on the
/// full dataset to downstream accuracy.
pub fn run_subset_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let name = cfg
        .subset
        .dataset
        .clone()
        .or_else(|| cfg.dataset.clone())
        .ok_or_else(|| Error::Config("subset.dataset is not set".into()))?;
    if cfg.subset.ratios.is_empty() {
        return Err(Error::Config("subset.ratios is empty".into()));
    }
    if cfg.subset.downstream.is_empty() {
        return Err(Error::Config("subset.downstream is empty".into()));
    }
    if cfg.subset.downstream.contains(&name) {
        return Err(Error::Config(format!(
            "{name} is both the pre-training set and a downstream task"
        )));
    }
    let base = cfg.load_dataset(&name)?;
    let tasks = load_all(cfg, &cfg.subset.downstream)?;
    let exec = cfg.exec();
    let mut cache = ModelCache::new(cfg.cache_dir.clone());
    let mut report = ExperimentReport::new(ExperimentKind::Subset, cfg);

    for (i, &ratio) in cfg.subset.ratios.iter().enumerate() {
        let start = Instant::now();
        let subset_seed = rng::mix(cfg.seed, &[domain::SUBSAMPLE, i as u64]);
        let sub = subsample_dataset(&base, ratio, subset_seed)?;
        let (key, model) =
            cache.get_or_train(&sub, &cfg.encoder, &cfg.train, &cfg.augment, exec)?;
        let ca = contrastive_accuracy_jobs(&model, &base.train, &cfg.ca, exec.threads())?;
        let perf = performance_of(&mut cache, &key, &model, &tasks, cfg)?;
        info!("ratio {ratio}: ca {ca:.4} p_test {:.4}", perf.p_test);
        report.rows.push(ReportRow {
            condition: format!("ratio={ratio}"),
            ca,
            p_train: perf.p_train,
            p_test: perf.p_test,
            seconds: start.elapsed().as_secs_f64(),
            degenerate: false,
            details: details(vec![
                ("ratio", json!(ratio)),
                ("subset_seed", json!(subset_seed)),
                ("num_series", json!(sub.train.len())),
                ("model", json!(key)),
                ("final_loss", json!(model.provenance.final_loss)),
                ("tasks", serde_json::to_value(&perf.tasks)?),
            ]),
        });
    }
    report.add_correlations("", |_| true);
    report.trainings = cache.log;
    Ok(report)
}

fn pairs_of(cfg: &ExperimentConfig) -> Result<Vec<(usize, String, String)>> {
    let collection = &cfg.improve.collection;
    let mut pairs = Vec::new();
    for (si, sweep) in cfg.improve.sweeps.iter().enumerate() {
        let partners: Vec<String> = if sweep.vary.is_empty() {
            collection
                .iter()
                .filter(|c| **c != sweep.dataset)
                .cloned()
                .collect()
        } else {
            sweep.vary.clone()
        };
        for n in std::iter::once(&sweep.dataset).chain(&partners) {
            if !collection.contains(n) {
                return Err(Error::Config(format!(
                    "sweep {si}: {n} is not in improve.collection"
                )));
            }
        }
        for p in partners {
            pairs.push(match sweep.fix {
                Fixed::Base => (si, sweep.dataset.clone(), p),
                Fixed::New => (si, p, sweep.dataset.clone()),
            });
        }
    }
    Ok(pairs)
}

/// For each (X₀, X_new) pair: ΔA_con = CA(f_new, X_new) − CA(f_X₀, X_new) and
/// ΔP = P(f_union) − P(f_X₀).
pub fn run_improvement_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let imp = &cfg.improve;
    if imp.collection.is_empty() {
        return Err(Error::Config("improve.collection is empty".into()));
    }
    if imp.downstream.is_empty() {
        return Err(Error::Config("improve.downstream is empty".into()));
    }
    if let Some(shared) = imp.collection.iter().find(|c| imp.downstream.contains(c)) {
        return Err(Error::Config(format!(
            "{shared} appears in both improve.collection and improve.downstream"
        )));
    }
    let pairs = pairs_of(cfg)?;
    if pairs.is_empty() {
        return Err(Error::Config("no (X0, X_new) pairs configured".into()));
    }
    let tasks = load_all(cfg, &imp.downstream)?;
    let mut data: HashMap<String, Dataset> = HashMap::new();
    for (_, a, b) in &pairs {
        for n in [a, b] {
            if !data.contains_key(n) {
                data.insert(n.clone(), cfg.load_dataset(n)?);
            }
        }
    }

    let exec = cfg.exec();
    let jobs = exec.threads();
    let mut cache = ModelCache::new(cfg.cache_dir.clone());
    let mut report = ExperimentReport::new(ExperimentKind::Improvement, cfg);
    for (si, a, b) in &pairs {
        let start = Instant::now();
        let (base, new) = (&data[a], &data[b]);
        let union = union_datasets(base, new);
        let (k_base, m_base) =
            cache.get_or_train(base, &cfg.encoder, &cfg.train, &cfg.augment, exec)?;
        let (k_new, m_new) =
            cache.get_or_train(new, &cfg.encoder, &cfg.train, &cfg.augment, exec)?;
        let (k_union, m_union) =
            cache.get_or_train(&union, &cfg.encoder, &cfg.train, &cfg.augment, exec)?;

        let ca_new = contrastive_accuracy_jobs(&m_new, &new.train, &cfg.ca, jobs)?;
        let ca_base = contrastive_accuracy_jobs(&m_base, &new.train, &cfg.ca, jobs)?;
        let p_base = performance_of(&mut cache, &k_base, &m_base, &tasks, cfg)?;
        let p_union = performance_of(&mut cache, &k_union, &m_union, &tasks, cfg)?;
        let degenerate = a == b;
        if degenerate {
            report
                .notes
                .push(format!("sweep {si}: self-pair {a}|{b} is degenerate"));
        }
        report.rows.push(ReportRow {
            condition: format!("{a}|{b}"),
            ca: ca_new - ca_base,
            p_train: p_union.p_train - p_base.p_train,
            p_test: p_union.p_test - p_base.p_test,
            seconds: start.elapsed().as_secs_f64(),
            degenerate,
            details: details(vec![
                ("sweep", json!(si)),
                ("base", json!(a)),
                ("new", json!(b)),
                ("ca_new_on_new", json!(ca_new)),
                ("ca_base_on_new", json!(ca_base)),
                ("p_train_base", json!(p_base.p_train)),
                ("p_train_union", json!(p_union.p_train)),
                ("p_test_base", json!(p_base.p_test)),
                ("p_test_union", json!(p_union.p_test)),
                ("model_base", json!(k_base)),
                ("model_new", json!(k_new)),
                ("model_union", json!(k_union)),
            ]),
        });
    }
    for si in 0..imp.sweeps.len() {
        report.add_correlations(&format!("sweep{si}:"), |r| {
            r.details.get("sweep") == Some(&json!(si))
        });
    }
    if imp.sweeps.len() > 1 {
        report.add_correlations("all:", |_| true);
    }
    report.trainings = cache.log;
    Ok(report)
}
