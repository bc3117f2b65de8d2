//! AdamW with decoupled weight decay and the warmup + cosine schedule.

use serde::{Deserialize, Serialize};

use crate::encoder::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// Step counter and moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One AdamW step: `p <- p - lr*wd*p`, then the bias-corrected Adam update.
pub fn adamw_update(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::arg(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape != g.shape || p.data.len() != g.data.len() {
            return Err(Error::arg(format!(
                "gradient {i} has shape {:?}, parameter has {:?}",
                g.shape, p.shape
            )));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state
            .m
            .iter()
            .zip(params.iter())
            .any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::arg(
            "optimizer state does not match the parameter set",
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for j in 0..p.data.len() {
            let gj = g.data[j];
            p.data[j] -= lr * cfg.weight_decay * p.data[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.data[j] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Linear warmup from `lr / warmup` then cosine decay, stepped per epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub lr: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.lr * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        let span = self.epochs.saturating_sub(self.warmup_epochs).max(1) as f64;
        let phase = (epoch - self.warmup_epochs) as f64 / span;
        self.lr * 0.5 * (1.0 + (std::f64::consts::PI * phase).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    fn step(p: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let mut p = scalar(p);
        let g = scalar(g);
        let cfg = AdamWConfig {
            weight_decay: wd,
            ..Default::default()
        };
        adamw_update(&mut [&mut p], &[&g], &mut OptimizerState::new(), lr, &cfg).unwrap();
        p.data[0]
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        assert_eq!(step(0.37, 0.0, 0.1, 0.0), 0.37);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let want = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((step(1.0, 1.0, 0.1, 0.0) - want).abs() < 1e-12);
        assert!((step(1.0, 1.0, 0.1, 0.0) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn decoupled_decay_scales_parameter() {
        assert!((step(2.0, 0.0, 0.1, 0.05) - 2.0 * (1.0 - 0.005)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar(1.0);
        let g = Tensor::zeros(&[2]);
        let r = adamw_update(
            &mut [&mut p],
            &[&g],
            &mut OptimizerState::new(),
            0.1,
            &AdamWConfig::default(),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn one_step_decreases_convex_quadratic() {
        // f(p) = (p - 3)^2
        for &p0 in &[-2.0, 0.5, 10.0] {
            let g = 2.0 * (p0 - 3.0);
            let p1 = step(p0, g, 1e-3, 0.0);
            assert!((p1 - 3.0f64).powi(2) < (p0 - 3.0f64).powi(2));
        }
    }
}
