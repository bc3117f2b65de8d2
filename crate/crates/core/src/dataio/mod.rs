//! Series and dataset types, UCR parsing, length canonicalization and the
//! set operations used by the experiments.

pub mod synthetic;
mod ucr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

pub use ucr::{load_ucr_dataset, parse_ucr_split, parse_ucr_split_with, LabelMap};

/// Length every series is canonicalized to before it reaches the encoder.
pub const CANONICAL_LEN: usize = 512;

const ZNORM_EPS: f64 = 1e-8;

/// One univariate sequence with an optional dense class id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub label: Option<usize>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, label: Option<usize>) -> Self {
        Self { values, label }
    }

    pub fn unlabeled(values: Vec<f64>) -> Self {
        Self::new(values, None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<TimeSeries>,
    pub test: Vec<TimeSeries>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, train: Vec<TimeSeries>, test: Vec<TimeSeries>) -> Self {
        let num_classes = train
            .iter()
            .chain(&test)
            .filter_map(|s| s.label)
            .max()
            .map_or(1, |m| m + 1);
        Self {
            name: name.into(),
            train,
            test,
            num_classes,
        }
    }

    /// Checks the label-range invariant.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::arg(format!(
                "{}: num_classes must be positive",
                self.name
            )));
        }
        for s in self.train.iter().chain(&self.test) {
            if let Some(l) = s.label {
                if l >= self.num_classes {
                    return Err(Error::arg(format!(
                        "{}: label {l} outside [0, {})",
                        self.name, self.num_classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn train_values(&self) -> Vec<Vec<f64>> {
        self.train.iter().map(|s| s.values.clone()).collect()
    }
}

/// Preprocessing applied to every parsed series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub seq_len: usize,
    pub znormalize: bool,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            seq_len: CANONICAL_LEN,
            znormalize: true,
        }
    }
}

/// Linear interpolation of `values` onto `out_len` evenly spaced positions.
///
/// Output `j` samples the input at `j * (n - 1) / (out_len - 1)`, so both
/// endpoints are reproduced exactly. A single-sample input is replicated.
pub fn resample_linear(values: &[f64], out_len: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::arg("resample_linear: empty input"));
    }
    if out_len == 0 {
        return Err(Error::arg("resample_linear: out_len must be positive"));
    }
    let n = values.len();
    if n == 1 {
        return Ok(vec![values[0]; out_len]);
    }
    if out_len == 1 {
        return Ok(vec![values[0]]);
    }
    if n == out_len {
        return Ok(values.to_vec());
    }
    let step = (n - 1) as f64 / (out_len - 1) as f64;
    let out = (0..out_len)
        .map(|j| {
            if j == out_len - 1 {
                return values[n - 1];
            }
            let pos = j as f64 * step;
            let i = (pos.floor() as usize).min(n - 2);
            let frac = pos - i as f64;
            if frac == 0.0 {
                values[i]
            } else {
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        })
        .collect();
    Ok(out)
}

/// `(v - mean) / (std + 1e-8)` with the population standard deviation.
pub fn znormalize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + ZNORM_EPS;
    values.iter().map(|v| (v - mean) / denom).collect()
}

/// Per-series z-normalization (optional) followed by resampling to the
/// canonical length.
pub fn canonicalize(values: &[f64], pre: &Preprocess) -> Result<Vec<f64>> {
    if pre.znormalize {
        resample_linear(&znormalize(values), pre.seq_len)
    } else {
        resample_linear(values, pre.seq_len)
    }
}

pub fn canonicalize_dataset(mut d: Dataset, pre: &Preprocess) -> Result<Dataset> {
    for s in d.train.iter_mut().chain(d.test.iter_mut()) {
        s.values = canonicalize(&s.values, pre)?;
    }
    Ok(d)
}

/// Uniform random subset of the training split, drawn without replacement.
/// Members keep their original relative order.
pub fn subsample_dataset(d: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::arg(format!(
            "subsample ratio {ratio} outside (0, 1]"
        )));
    }
    let n = d.train.len();
    let size = (ratio * n as f64).round() as usize;
    if size < 1 {
        return Err(Error::arg(format!(
            "subsample ratio {ratio} of {n} series leaves an empty set"
        )));
    }
    let mut rng = rng::stream(seed, &[domain::SUBSAMPLE, n as u64]);
    let mut picked = index::sample(&mut rng, n, size).into_vec();
    picked.sort_unstable();
    Ok(Dataset {
        name: format!("{}@{}", d.name, ratio),
        train: picked.into_iter().map(|i| d.train[i].clone()).collect(),
        test: d.test.clone(),
        num_classes: d.num_classes,
    })
}

/// Multiset union of two pre-training sets. Labels carry no meaning afterwards.
pub fn union_datasets(a: &Dataset, b: &Dataset) -> Dataset {
    Dataset {
        name: format!("{}+{}", a.name, b.name),
        train: a.train.iter().chain(&b.train).cloned().collect(),
        test: a.test.iter().chain(&b.test).cloned().collect(),
        num_classes: a.num_classes.max(b.num_classes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(n: usize) -> Dataset {
        let train = (0..n)
            .map(|i| TimeSeries::new(vec![i as f64, 0.0], Some(i % 2)))
            .collect();
        Dataset::new("d", train, vec![TimeSeries::new(vec![9.0, 9.0], Some(0))])
    }

    #[test]
    fn resample_identity_and_midpoint() {
        assert_eq!(
            resample_linear(&[1.0, 2.0, 3.0, 4.0], 4).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(
            resample_linear(&[0.0, 1.0], 3).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(resample_linear(&[7.0], 5).unwrap(), vec![7.0; 5]);
    }

    #[test]
    fn resample_constant_to_canonical() {
        let out = resample_linear(&[5.0, 5.0, 5.0], 512).unwrap();
        assert_eq!(out.len(), 512);
        assert!(out.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn resample_preserves_endpoints() {
        let v: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let out = resample_linear(&v, 512).unwrap();
        assert_eq!(out[0], v[0]);
        assert_eq!(out[511], v[36]);
    }

    #[test]
    fn znormalize_examples() {
        let z = znormalize(&[0.0, 2.0]);
        assert!((z[0] + 1.0).abs() < 1e-7 && (z[1] - 1.0).abs() < 1e-7);
        assert_eq!(znormalize(&[3.0, 3.0, 3.0]), vec![0.0, 0.0, 0.0]);
        let twice = znormalize(&z);
        for (a, b) in z.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn subsample_full_ratio_keeps_membership() {
        let d = ds(10);
        assert_eq!(subsample_dataset(&d, 1.0, 3).unwrap().train, d.train);
    }

    #[test]
    fn subsample_half_and_determinism() {
        let d = ds(10);
        let a = subsample_dataset(&d, 0.5, 11).unwrap();
        let b = subsample_dataset(&d, 0.5, 11).unwrap();
        assert_eq!(a.train.len(), 5);
        assert!(a.train.iter().all(|s| d.train.contains(s)));
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, d.test);
    }

    #[test]
    fn subsample_rejects_bad_ratios() {
        let d = ds(10);
        assert!(matches!(
            subsample_dataset(&d, 0.0, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            subsample_dataset(&d, 1.5, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(subsample_dataset(&d, 0.01, 1).is_err());
    }

    #[test]
    fn union_identity_cardinality_commutativity() {
        let a = ds(4);
        let empty = Dataset::new("e", vec![], vec![]);
        assert_eq!(union_datasets(&a, &empty).train, a.train);
        let b = ds(3);
        let ab = union_datasets(&a, &b);
        let ba = union_datasets(&b, &a);
        assert_eq!(ab.name, "d+d");
        assert_eq!(ab.train.len(), 7);
        let key = |d: &Dataset| {
            let mut v: Vec<String> = d.train.iter().map(|s| format!("{:?}", s.values)).collect();
            v.sort();
            v
        };
        assert_eq!(key(&ab), key(&ba));
    }

    proptest! {
        #[test]
        fn resample_stays_within_bounds(
            v in prop::collection::vec(-1e3f64..1e3, 2..64),
            out_len in 2usize..600,
        ) {
            let out = resample_linear(&v, out_len).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(out.len(), out_len);
            prop_assert!(out.iter().all(|&x| x >= lo - 1e-9 && x <= hi + 1e-9));
        }

        #[test]
        fn subsample_is_subset(n in 1usize..40, ratio in 0.05f64..=1.0, seed in any::<u64>()) {
            let d = ds(n);
            if (ratio * n as f64).round() as usize >= 1 {
                let s = subsample_dataset(&d, ratio, seed).unwrap();
                prop_assert!(s.train.iter().all(|x| d.train.contains(x)));
                prop_assert_eq!(s.train, subsample_dataset(&d, ratio, seed).unwrap().train);
            }
        }

        #[test]
        fn canonicalized_series_are_finite_and_512(
            v in prop::collection::vec(-1e6f64..1e6, 1..900),
        ) {
            let c = canonicalize(&v, &Preprocess::default()).unwrap();
            prop_assert_eq!(c.len(), 512);
            prop_assert!(c.iter().all(|x| x.is_finite()));
        }
    }
}
