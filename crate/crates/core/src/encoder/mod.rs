//! The foundation model `F` (convolutional patch embedding with per-patch
//! mean/std features, a pre-norm transformer, CLS readout), the projector
//! `g`, and exact reverse-mode gradients through both.

mod contrastive;
mod layers;
mod model;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use contrastive::{loss_and_gradients, LossOptions};
pub use model::{
    backward_encoder, backward_projector, encode, encode_with_tape, patch_tokens, project,
    project_with_tape, EncoderTape, ProjectorTape,
};
pub use params::{init_params, Block, Dense, EncoderParams, Norm, Projector, Tensor};

/// Shape hyperparameters of the encoder and projector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub seq_len: usize,
    /// Length of each non-overlapping patch.
    pub patch_len: usize,
    pub cnn_kernel: usize,
    pub cnn_pad: usize,
    pub cnn_channels: usize,
    pub tokens: usize,
    pub cls_tokens: usize,
    pub token_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_dim: usize,
    /// Width of the per-patch mean and std embeddings.
    pub stat_dim: usize,
    pub proj_hidden: usize,
    pub proj_out: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            seq_len: 512,
            patch_len: 16,
            cnn_kernel: 17,
            cnn_pad: 8,
            cnn_channels: 256,
            tokens: 32,
            cls_tokens: 1,
            token_dim: 256,
            layers: 6,
            heads: 8,
            head_dim: 128,
            mlp_dim: 512,
            stat_dim: 32,
            proj_hidden: 512,
            proj_out: 256,
        }
    }
}

impl EncoderConfig {
    /// Minimal configuration used for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            seq_len: 16,
            patch_len: 4,
            cnn_kernel: 5,
            cnn_pad: 2,
            cnn_channels: 8,
            tokens: 4,
            cls_tokens: 1,
            token_dim: 8,
            layers: 2,
            heads: 2,
            head_dim: 8,
            mlp_dim: 16,
            stat_dim: 4,
            proj_hidden: 16,
            proj_out: 8,
        }
    }

    /// Narrow encoder over the full 512-sample input, sized for single-core
    /// desk runs.
    pub fn compact() -> Self {
        Self {
            cnn_channels: 32,
            token_dim: 32,
            layers: 2,
            heads: 4,
            head_dim: 8,
            mlp_dim: 64,
            stat_dim: 8,
            proj_hidden: 64,
            proj_out: 32,
            ..Self::default()
        }
    }

    /// Width of the attention inner space, `heads * head_dim`.
    pub fn inner_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Width of a token before the fusion map.
    pub fn fused_dim(&self) -> usize {
        self.cnn_channels + 2 * self.stat_dim
    }

    pub fn conv_out_len(&self) -> Option<usize> {
        (self.seq_len + 2 * self.cnn_pad + 1).checked_sub(self.cnn_kernel)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("seq_len", self.seq_len),
            ("patch_len", self.patch_len),
            ("cnn_kernel", self.cnn_kernel),
            ("cnn_channels", self.cnn_channels),
            ("tokens", self.tokens),
            ("token_dim", self.token_dim),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("mlp_dim", self.mlp_dim),
            ("stat_dim", self.stat_dim),
            ("proj_hidden", self.proj_hidden),
            ("proj_out", self.proj_out),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder.{name} must be positive")));
        }
        if self.cls_tokens != 1 {
            return Err(Error::Config("encoder.cls_tokens must be 1".into()));
        }
        if self.seq_len % self.patch_len != 0 || self.tokens != self.seq_len / self.patch_len {
            return Err(Error::Config(format!(
                "encoder.tokens ({}) must equal seq_len / patch_len ({} / {})",
                self.tokens, self.seq_len, self.patch_len
            )));
        }
        if self.conv_out_len() != Some(self.seq_len) {
            return Err(Error::Config(format!(
                "convolution with kernel {} and padding {} does not preserve length {}",
                self.cnn_kernel, self.cnn_pad, self.seq_len
            )));
        }
        Ok(())
    }
}

/// `F(x)`: the CLS state after the final norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
