//! Experiment reports: one JSON document plus a flat CSV of the rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cache::TrainingRecord;
use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluate::pearson;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Subset,
    Improvement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    /// CA for subset rows, ΔA_con for improvement rows.
    pub ca: f64,
    /// Mean accuracies for subset rows, differences for improvement rows.
    pub p_train: f64,
    pub p_test: f64,
    /// Wall time; the only field allowed to differ between reruns.
    pub seconds: f64,
    pub degenerate: bool,
    pub details: IndexMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub rows: Vec<ReportRow>,
    /// Pearson correlations; a key is present only when it is defined.
    pub summary: IndexMap<String, f64>,
    pub notes: Vec<String>,
    pub seeds: IndexMap<String, u64>,
    pub config: ExperimentConfig,
    pub trainings: Vec<TrainingRecord>,
}

impl ExperimentReport {
    pub fn new(kind: ExperimentKind, config: &ExperimentConfig) -> Self {
        let seeds = [
            ("seed", config.seed),
            ("train", config.train.seed),
            ("ca", config.ca.seed),
            ("probe", config.probe.seed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            kind,
            rows: Vec::new(),
            summary: IndexMap::new(),
            notes: Vec::new(),
            seeds,
            config: config.clone(),
            trainings: Vec::new(),
        }
    }

    /// Adds ρ(ca, p_test) and ρ(ca, p_train) over the non-degenerate rows
    /// selected by `filter`, when at least two exist and ρ is defined.
    pub fn add_correlations(&mut self, prefix: &str, filter: impl Fn(&ReportRow) -> bool) {
        let rows: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| !r.degenerate && filter(r))
            .collect();
        if rows.len() < 2 {
            return;
        }
        let ca: Vec<f64> = rows.iter().map(|r| r.ca).collect();
        for (name, ys) in [
            ("p_test", rows.iter().map(|r| r.p_test).collect::<Vec<_>>()),
            ("p_train", rows.iter().map(|r| r.p_train).collect()),
        ] {
            let key = format!("{prefix}rho_ca_{name}");
            match pearson(&ca, &ys) {
                Ok(rho) => {
                    self.summary.insert(key, rho);
                }
                Err(e) => self.notes.push(format!("{key} omitted: {e}")),
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,ca,p_train,p_test,seconds\n");
        for r in &self.rows {
            let cond = if r.condition.contains([',', '"', '\n']) {
                format!("\"{}\"", r.condition.replace('"', "\"\""))
            } else {
                r.condition.clone()
            };
            let _ = writeln!(
                out,
                "{cond},{},{},{},{}",
                r.ca, r.p_train, r.p_test, r.seconds
            );
        }
        out
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()? + "\n").map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }

    /// Copy with every wall-time field zeroed, for rerun comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.seconds = 0.0;
        }
        r
    }
}
