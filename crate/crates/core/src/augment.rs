//! RandomCropResize: crop a contiguous window covering a uniformly drawn
//! fraction of the series, then resample it back to a fixed length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{resample_linear, CANONICAL_LEN};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropResizeConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub out_len: usize,
}

impl Default for CropResizeConfig {
    fn default() -> Self {
        Self {
            scale_min: 0.7,
            scale_max: 0.8,
            out_len: CANONICAL_LEN,
        }
    }
}

impl CropResizeConfig {
    /// The degenerate family containing only the identity map.
    pub fn identity(len: usize) -> Self {
        Self {
            scale_min: 1.0,
            scale_max: 1.0,
            out_len: len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max <= 1.0) {
            return Err(Error::Config(format!(
                "augment scales must satisfy 0 < scale_min <= scale_max <= 1, got [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        if self.out_len < 2 {
            return Err(Error::Config("augment.out_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// One sampled member of the augmentation family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropDraw {
    pub fraction: f64,
    pub start: usize,
    /// Window length in samples, `round(fraction * in_len)` clamped to the input.
    pub len: usize,
    pub in_len: usize,
    pub out_len: usize,
}

impl CropDraw {
    pub fn identity(len: usize) -> Self {
        Self {
            fraction: 1.0,
            start: 0,
            len,
            in_len: len,
            out_len: len,
        }
    }
}

fn crop_len(fraction: f64, in_len: usize) -> usize {
    ((fraction * in_len as f64).round() as usize).clamp(1, in_len)
}

pub fn sample_crop(rng: &mut impl Rng, cfg: &CropResizeConfig, in_len: usize) -> CropDraw {
    let fraction = if cfg.scale_min < cfg.scale_max {
        rng.gen_range(cfg.scale_min..=cfg.scale_max)
    } else {
        cfg.scale_min
    };
    let len = crop_len(fraction, in_len);
    let start = if len < in_len {
        rng.gen_range(0..=in_len - len)
    } else {
        0
    };
    CropDraw {
        fraction,
        start,
        len,
        in_len,
        out_len: cfg.out_len,
    }
}

pub fn apply_crop_resize(draw: &CropDraw, series: &[f64]) -> Result<Vec<f64>> {
    if series.len() != draw.in_len {
        return Err(Error::arg(format!(
            "crop drawn for length {} applied to length {}",
            draw.in_len,
            series.len()
        )));
    }
    if draw.len < 2 {
        return Err(Error::arg(format!(
            "crop window of {} samples is too short",
            draw.len
        )));
    }
    if draw.start + draw.len > series.len() {
        return Err(Error::arg("crop window exceeds the series"));
    }
    resample_linear(&series[draw.start..draw.start + draw.len], draw.out_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn full_scale_draws_are_identity() {
        let cfg = CropResizeConfig::identity(512);
        let mut r = rng::stream(1, &[]);
        let series: Vec<f64> = (0..512).map(|i| (i as f64 * 0.1).sin()).collect();
        for _ in 0..20 {
            let d = sample_crop(&mut r, &cfg, 512);
            assert_eq!((d.fraction, d.start), (1.0, 0));
            assert_eq!(apply_crop_resize(&d, &series).unwrap(), series);
        }
    }

    #[test]
    fn fraction_mean_is_three_quarters() {
        let cfg = CropResizeConfig::default();
        let mut r = rng::stream(2, &[]);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| sample_crop(&mut r, &cfg, 512).fraction)
            .sum::<f64>()
            / n as f64;
        assert!((0.745..=0.755).contains(&mean), "mean {mean}");
    }

    #[test]
    fn ramp_crop_is_stretched_ramp() {
        let ramp: Vec<f64> = (0..512).map(|i| i as f64).collect();
        let d = CropDraw {
            fraction: 0.8,
            start: 0,
            len: crop_len(0.8, 512),
            in_len: 512,
            out_len: 512,
        };
        assert_eq!(d.len, 410);
        let out = apply_crop_resize(&d, &ramp).unwrap();
        for (j, v) in out.iter().enumerate() {
            let want = j as f64 * 409.0 / 511.0;
            assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_series_stays_constant() {
        let mut r = rng::stream(3, &[]);
        let d = sample_crop(&mut r, &CropResizeConfig::default(), 512);
        assert!(apply_crop_resize(&d, &[2.5; 512])
            .unwrap()
            .iter()
            .all(|&v| v == 2.5));
    }

    #[test]
    fn short_window_is_rejected() {
        let d = CropDraw {
            fraction: 0.5,
            start: 0,
            len: 1,
            in_len: 2,
            out_len: 8,
        };
        assert!(matches!(
            apply_crop_resize(&d, &[1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    proptest! {
        #[test]
        fn draws_are_valid_and_bounded(
            seed in any::<u64>(),
            series in prop::collection::vec(-100f64..100.0, 2..700),
        ) {
            let mut r = rng::stream(seed, &[]);
            let cfg = CropResizeConfig::default();
            let d = sample_crop(&mut r, &cfg, series.len());
            prop_assert!(d.start + d.len <= series.len());
            prop_assert!(d.fraction >= 0.7 && d.fraction <= 0.8);
            if d.len >= 2 {
                let out = apply_crop_resize(&d, &series).unwrap();
                let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(out.len(), cfg.out_len);
                prop_assert!(out.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
            }
        }
    }

    #[test]
    fn identity_draw_equals_plain_resample() {
        let s: Vec<f64> = (0..300).map(|i| (i as f64).sqrt()).collect();
        let d = CropDraw {
            fraction: 1.0,
            start: 0,
            len: 300,
            in_len: 300,
            out_len: 512,
        };
        assert_eq!(
            apply_crop_resize(&d, &s).unwrap(),
            resample_linear(&s, 512).unwrap()
        );
    }
}
