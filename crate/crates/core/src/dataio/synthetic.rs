//! Labeled synthetic corpora for smoke tests and desk-scale experiments.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{canonicalize_dataset, Dataset, Preprocess, TimeSeries};
use crate::error::Result;
use crate::rng::{self, domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// sine / square / sawtooth with random frequency and phase.
    Waveforms,
    /// rising vs falling instantaneous frequency.
    Chirp,
    /// one Gaussian bump in the first, middle or last third.
    Bumps,
    /// rising, falling or flat drift under a small oscillation.
    Trend,
    /// AR(1) noise with weak vs strong persistence.
    Persistence,
}

impl Family {
    pub fn num_classes(self) -> usize {
        match self {
            Family::Waveforms | Family::Bumps | Family::Trend => 3,
            Family::Chirp | Family::Persistence => 2,
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Waveforms => "waveforms",
            Family::Chirp => "chirp",
            Family::Bumps => "bumps",
            Family::Trend => "trend",
            Family::Persistence => "persistence",
        }
    }
}

/// Parameters of a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub family: Family,
    pub train: usize,
    pub test: usize,
    /// Raw length before canonicalization.
    pub length: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            family: Family::Waveforms,
            train: 300,
            test: 100,
            length: 512,
            noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn name(&self) -> String {
        format!("synthetic-{}-s{}", self.family.name(), self.seed)
    }
}

/// Generates a balanced corpus; example `i` has class `i % num_classes`.
pub fn generate(spec: &SyntheticSpec, pre: &Preprocess) -> Result<Dataset> {
    let split = |which: u64, n: usize| -> Vec<TimeSeries> {
        (0..n)
            .map(|i| {
                let class = i % spec.family.num_classes();
                let mut rng = rng::stream(
                    spec.seed,
                    &[domain::SYNTHETIC, spec.family.tag(), which, i as u64],
                );
                let values = sample_series(spec, class, &mut rng);
                TimeSeries::new(values, Some(class))
            })
            .collect()
    };
    let d = Dataset {
        name: spec.name(),
        train: split(0, spec.train),
        test: split(1, spec.test),
        num_classes: spec.family.num_classes(),
    };
    canonicalize_dataset(d, pre)
}

fn sample_series(spec: &SyntheticSpec, class: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = spec.length.max(2);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise scale");
    let amp = rng.gen_range(0.5..1.5);
    let phase = rng.gen_range(0.0..1.0);
    let t = |i: usize| i as f64 / (n - 1) as f64;
    let mut values: Vec<f64> = match spec.family {
        Family::Waveforms => {
            let cycles = rng.gen_range(2.0..6.0);
            (0..n)
                .map(|i| {
                    let u = (cycles * t(i) + phase).fract();
                    amp * match class {
                        0 => (2.0 * PI * u).sin(),
                        1 => {
                            if u < 0.5 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                        _ => 2.0 * u - 1.0,
                    }
                })
                .collect()
        }
        Family::Chirp => {
            let (f0, f1) = (rng.gen_range(1.0..3.0), rng.gen_range(8.0..12.0));
            let (start, end) = if class == 0 { (f0, f1) } else { (f1, f0) };
            (0..n)
                .map(|i| {
                    let x = t(i);
                    let cycles = start * x + 0.5 * (end - start) * x * x;
                    amp * (2.0 * PI * (cycles + phase)).sin()
                })
                .collect()
        }
        Family::Bumps => {
            let center = (class as f64 + rng.gen_range(0.25..0.75)) / 3.0;
            let width = rng.gen_range(0.03..0.08);
            (0..n)
                .map(|i| amp * (-(t(i) - center).powi(2) / (2.0 * width * width)).exp())
                .collect()
        }
        Family::Trend => {
            let slope = match class {
                0 => rng.gen_range(1.0..2.0),
                1 => -rng.gen_range(1.0..2.0),
                _ => 0.0,
            };
            let cycles = rng.gen_range(3.0..8.0);
            (0..n)
                .map(|i| slope * t(i) + 0.3 * amp * (2.0 * PI * (cycles * t(i) + phase)).sin())
                .collect()
        }
        Family::Persistence => {
            let coef = if class == 0 { 0.2 } else { 0.95 };
            let innov = Normal::new(0.0, 1.0).unwrap();
            let mut x = 0.0;
            (0..n)
                .map(|_| {
                    x = coef * x + innov.sample(rng);
                    x
                })
                .collect()
        }
    };
    for v in values.iter_mut() {
        *v += noise.sample(rng);
    }
    values
}
