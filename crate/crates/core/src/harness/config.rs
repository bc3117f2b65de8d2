//! Experiment configuration.
//!
//! Layers are applied in order: built-in defaults, the selected profile, a
//! JSON config file (deep-merged), then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::CropResizeConfig;
use crate::dataio::synthetic::{generate, Family, SyntheticSpec};
use crate::dataio::{load_ucr_dataset, Dataset, Preprocess};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::evaluate::{CAConfig, ProbeConfig};
use crate::training::{Exec, TrainConfig};

/// Pre-training collection used by the improvement experiment.
pub const DEFAULT_COLLECTION: [&str; 12] = [
    "AllGestureWiimoteX",
    "CricketY",
    "EOGVerticalSignal",
    "Haptics",
    "MelbournePedestrian",
    "PLAID",
    "Phoneme",
    "ScreenType",
    "UWaveGestureLibraryX",
    "WordSynonyms",
    "WormsTwoClass",
    "Yoga",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Reduced epochs and a truncated downstream list.
    Desk,
    #[default]
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskSettings {
    pub pretrain_epochs: usize,
    pub probe_epochs: usize,
    pub max_downstream: usize,
}

impl Default for DeskSettings {
    fn default() -> Self {
        Self {
            pretrain_epochs: 100,
            probe_epochs: 100,
            max_downstream: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetSettings {
    pub dataset: Option<String>,
    pub ratios: Vec<f64>,
    pub downstream: Vec<String>,
}

impl Default for SubsetSettings {
    fn default() -> Self {
        Self {
            dataset: None,
            ratios: (1..=10).map(|i| i as f64 / 10.0).collect(),
            downstream: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixed {
    /// Keep X₀ fixed and vary the added set.
    Base,
    /// Keep the added set fixed and vary X₀.
    New,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub fix: Fixed,
    pub dataset: String,
    /// Partners of `dataset`; empty means the rest of the collection.
    #[serde(default)]
    pub vary: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImproveSettings {
    pub collection: Vec<String>,
    pub downstream: Vec<String>,
    pub sweeps: Vec<Sweep>,
}

impl Default for ImproveSettings {
    fn default() -> Self {
        let first = DEFAULT_COLLECTION[0].to_string();
        Self {
            collection: DEFAULT_COLLECTION.iter().map(|s| s.to_string()).collect(),
            downstream: Vec::new(),
            sweeps: vec![
                Sweep {
                    fix: Fixed::Base,
                    dataset: first.clone(),
                    vary: Vec::new(),
                },
                Sweep {
                    fix: Fixed::New,
                    dataset: first,
                    vary: Vec::new(),
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Sub-config seeds (`train`, `ca`, `probe`) are set from this one.
    pub seed: u64,
    pub data_root: Option<PathBuf>,
    /// Checkpoints trained by experiments are kept here when set.
    pub cache_dir: Option<PathBuf>,
    pub jobs: usize,
    pub deterministic: bool,
    /// Default dataset for `pretrain`, `eval-ca` and `probe`.
    pub dataset: Option<String>,
    pub preprocess: Preprocess,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub augment: CropResizeConfig,
    pub ca: CAConfig,
    pub probe: ProbeConfig,
    pub desk: DeskSettings,
    pub subset: SubsetSettings,
    pub improve: ImproveSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Paper,
            seed: 0,
            data_root: None,
            cache_dir: None,
            jobs: 1,
            deterministic: false,
            dataset: None,
            preprocess: Preprocess::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            augment: CropResizeConfig::default(),
            ca: CAConfig::default(),
            probe: ProbeConfig::default(),
            desk: DeskSettings::default(),
            subset: SubsetSettings::default(),
            improve: ImproveSettings::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub data_root: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub deterministic: bool,
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut cfg = Self {
            profile,
            ..Self::default()
        };
        if profile == Profile::Desk {
            cfg.train.epochs = cfg.desk.pretrain_epochs;
            cfg.probe.epochs = cfg.desk.probe_epochs;
        }
        cfg
    }

    /// Builds the effective configuration from an optional JSON document and
    /// command-line overrides.
    pub fn resolve(file: Option<Value>, over: &Overrides) -> Result<Self> {
        if let Some(f) = &file {
            if !f.is_object() {
                return Err(Error::Config("config file must hold a JSON object".into()));
            }
        }
        let file_profile = match file.as_ref().and_then(|f| f.get("profile")) {
            Some(p) => Some(
                serde_json::from_value::<Profile>(p.clone())
                    .map_err(|e| Error::Config(format!("profile: {e}")))?,
            ),
            None => None,
        };
        let profile = over.profile.or(file_profile).unwrap_or_default();
        let mut layered = serde_json::to_value(Self::for_profile(profile))?;
        if let Some(f) = file {
            merge(&mut layered, f);
        }
        let mut cfg: Self =
            serde_json::from_value(layered).map_err(|e| Error::Config(e.to_string()))?;
        cfg.profile = profile;
        if let Some(seed) = over.seed {
            cfg.seed = seed;
        }
        if let Some(root) = &over.data_root {
            cfg.data_root = Some(root.clone());
        }
        if let Some(jobs) = over.jobs {
            cfg.jobs = jobs;
        }
        cfg.deterministic |= over.deterministic;
        cfg.finalize()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, over: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::resolve(Some(value), over)
    }

    fn finalize(&mut self) -> Result<()> {
        self.train.seed = self.seed;
        self.ca.seed = self.seed;
        self.probe.seed = self.seed;
        if self.profile == Profile::Desk {
            let cap = self.desk.max_downstream;
            self.subset.downstream.truncate(cap);
            self.improve.downstream.truncate(cap);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.encoder.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        self.augment.validate().map_err(as_config)?;
        self.ca.validate().map_err(as_config)?;
        self.probe.validate().map_err(as_config)?;
        if self.preprocess.seq_len != self.encoder.seq_len {
            return Err(Error::Config(
                "preprocess.seq_len must equal encoder.seq_len".into(),
            ));
        }
        if self.augment.out_len != self.encoder.seq_len {
            return Err(Error::Config(
                "augment.out_len must equal encoder.seq_len".into(),
            ));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if let Some(r) = self
            .subset
            .ratios
            .iter()
            .find(|r| !(**r > 0.0 && **r <= 1.0))
        {
            return Err(Error::Config(format!("subset ratio {r} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        Exec {
            jobs: self.jobs,
            deterministic: self.deterministic,
        }
    }

    /// Loads a dataset reference; see [`DatasetSource::parse`].
    pub fn load_dataset(&self, reference: &str) -> Result<Dataset> {
        let mut d =
            DatasetSource::parse(reference)?.load(self.data_root.as_deref(), &self.preprocess)?;
        d.name = reference.to_string();
        Ok(d)
    }
}

/// Where a dataset comes from.
///
/// `synthetic:<family>[:train[:test[:seed[:noise]]]]` generates a corpus; any
/// other string names a UCR dataset under the data root.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Ucr(String),
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    pub fn parse(reference: &str) -> Result<Self> {
        let Some(rest) = reference.strip_prefix("synthetic:") else {
            if reference.is_empty() {
                return Err(Error::Config("empty dataset name".into()));
            }
            return Ok(Self::Ucr(reference.to_string()));
        };
        let bad = |what: &str| Error::Config(format!("dataset {reference:?}: bad {what}"));
        let mut parts = rest.split(':');
        let family: Family =
            serde_json::from_value(Value::String(parts.next().unwrap_or("").into()))
                .map_err(|_| bad("family"))?;
        let mut spec = SyntheticSpec {
            family,
            ..SyntheticSpec::default()
        };
        if let Some(p) = parts.next() {
            spec.train = p.parse().map_err(|_| bad("train count"))?;
        }
        if let Some(p) = parts.next() {
            spec.test = p.parse().map_err(|_| bad("test count"))?;
        }
        if let Some(p) = parts.next() {
            spec.seed = p.parse().map_err(|_| bad("seed"))?;
        }
        if let Some(p) = parts.next() {
            spec.noise = p.parse().map_err(|_| bad("noise"))?;
        }
        if parts.next().is_some() {
            return Err(bad("field count"));
        }
        Ok(Self::Synthetic(spec))
    }

    pub fn load(&self, data_root: Option<&Path>, pre: &Preprocess) -> Result<Dataset> {
        match self {
            Self::Ucr(name) => {
                let root = data_root
                    .ok_or_else(|| Error::Config(format!("dataset {name} needs --data-root")))?;
                load_ucr_dataset(root, name, pre)
            }
            Self::Synthetic(spec) => generate(spec, pre),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn layers_apply_in_order() {
        let over = Overrides {
            profile: Some(Profile::Desk),
            seed: Some(9),
            ..Default::default()
        };
        let file = json!({"profile": "paper", "seed": 3, "probe": {"epochs": 17}});
        let cfg = ExperimentConfig::resolve(Some(file), &over).unwrap();
        assert_eq!(cfg.profile, Profile::Desk);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.probe.epochs, 17);
        assert_eq!(cfg.seed, 9);
        assert_eq!((cfg.train.seed, cfg.ca.seed, cfg.probe.seed), (9, 9, 9));
        assert_eq!(cfg.train.lr, 2e-4);
    }

    #[test]
    fn paper_profile_keeps_table_values() {
        let cfg = ExperimentConfig::resolve(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.train.epochs, 500);
        assert_eq!(cfg.probe.epochs, 500);
        assert_eq!(cfg.train.batch, 64);
        assert_eq!(cfg.improve.collection.len(), 12);
        assert_eq!(cfg.subset.ratios.len(), 10);
    }

    #[test]
    fn desk_truncates_downstream() {
        let names: Vec<String> = (0..20).map(|i| format!("D{i}")).collect();
        let file = json!({"profile": "desk", "desk": {"max_downstream": 3}, "subset": {"downstream": names}});
        let cfg = ExperimentConfig::resolve(Some(file), &Overrides::default()).unwrap();
        assert_eq!(cfg.subset.downstream, vec!["D0", "D1", "D2"]);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let file = json!({"train": {"lr": -1.0}});
        assert!(matches!(
            ExperimentConfig::resolve(Some(file), &Overrides::default()),
            Err(Error::Config(_))
        ));
        let file = json!({"encoder": {"seq_len": 256}});
        assert!(matches!(
            ExperimentConfig::resolve(Some(file), &Overrides::default()),
            Err(Error::Config(_))
        ));
        let file = json!({"train": {"epochs": "many"}});
        assert!(matches!(
            ExperimentConfig::resolve(Some(file), &Overrides::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dataset_references_parse() {
        assert_eq!(
            DatasetSource::parse("Yoga").unwrap(),
            DatasetSource::Ucr("Yoga".into())
        );
        match DatasetSource::parse("synthetic:chirp:40:20:7").unwrap() {
            DatasetSource::Synthetic(s) => {
                assert_eq!(
                    (s.family, s.train, s.test, s.seed),
                    (Family::Chirp, 40, 20, 7)
                );
            }
            other => panic!("{other:?}"),
        }
        assert!(DatasetSource::parse("synthetic:nope").is_err());
        assert!(DatasetSource::parse("synthetic:bumps:x").is_err());
    }

    #[test]
    fn ucr_without_root_is_config_error() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(cfg.load_dataset("Yoga"), Err(Error::Config(_))));
    }
}
