use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// A dense row-major tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Affine map `y = W x + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut d = Self::zeros(out_dim, in_dim);
        d.weight
            .data
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-bound..bound));
        d
    }
}

/// Layer normalization scale and offset.
#[derive(Clone, Debug, PartialEq)]
pub struct Norm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl Norm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gamma: Tensor::zeros(&[dim]),
            beta: Tensor::zeros(&[dim]),
        }
    }
}

/// One pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub norm1: Norm,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub attn_out: Dense,
    pub norm2: Norm,
    pub mlp_in: Dense,
    pub mlp_out: Dense,
}

/// Non-linear projector `g`: norm, hidden map, ReLU, output map.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub norm: Norm,
    pub hidden: Dense,
    pub out: Dense,
}

/// Every learnable tensor of the encoder `F` and the projector `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// 1-D convolution, weight `[channels, kernel]` (single input channel).
    pub conv: Dense,
    pub mu_embed: Dense,
    pub sigma_embed: Dense,
    /// `[token_dim, channels + 2 * stat_dim]`
    pub fuse: Dense,
    /// `[tokens + 1, token_dim]`, row 0 belongs to CLS.
    pub pos: Tensor,
    pub cls: Tensor,
    pub layers: Vec<Block>,
    pub final_norm: Norm,
    pub projector: Projector,
}

impl EncoderParams {
    /// All-zero tensors shaped for `cfg` (gradient and moment buffers).
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let d = cfg.token_dim;
        let inner = cfg.inner_dim();
        let block = || Block {
            norm1: Norm::zeros(d),
            query: Dense::zeros(inner, d),
            key: Dense::zeros(inner, d),
            value: Dense::zeros(inner, d),
            attn_out: Dense::zeros(d, inner),
            norm2: Norm::zeros(d),
            mlp_in: Dense::zeros(cfg.mlp_dim, d),
            mlp_out: Dense::zeros(d, cfg.mlp_dim),
        };
        Self {
            config: cfg.clone(),
            conv: Dense::zeros(cfg.cnn_channels, cfg.cnn_kernel),
            mu_embed: Dense::zeros(cfg.stat_dim, 1),
            sigma_embed: Dense::zeros(cfg.stat_dim, 1),
            fuse: Dense::zeros(d, cfg.fused_dim()),
            pos: Tensor::zeros(&[cfg.tokens + cfg.cls_tokens, d]),
            cls: Tensor::zeros(&[d]),
            layers: (0..cfg.layers).map(|_| block()).collect(),
            final_norm: Norm::zeros(d),
            projector: Projector {
                norm: Norm::zeros(d),
                hidden: Dense::zeros(cfg.proj_hidden, d),
                out: Dense::zeros(cfg.proj_out, cfg.proj_hidden),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Tensor names in canonical (serialization) order.
    pub fn tensor_names(cfg: &EncoderConfig) -> Vec<String> {
        Self::zeros(cfg)
            .named_tensors()
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        fn push_dense<'a>(out: &mut Vec<(String, &'a Tensor)>, name: &str, d: &'a Dense) {
            out.push((format!("{name}.weight"), &d.weight));
            out.push((format!("{name}.bias"), &d.bias));
        }
        fn push_norm<'a>(out: &mut Vec<(String, &'a Tensor)>, name: &str, n: &'a Norm) {
            out.push((format!("{name}.gamma"), &n.gamma));
            out.push((format!("{name}.beta"), &n.beta));
        }
        push_dense(&mut out, "conv", &self.conv);
        push_dense(&mut out, "mu_embed", &self.mu_embed);
        push_dense(&mut out, "sigma_embed", &self.sigma_embed);
        push_dense(&mut out, "fuse", &self.fuse);
        out.push(("pos".into(), &self.pos));
        out.push(("cls".into(), &self.cls));
        for (i, b) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            push_norm(&mut out, &format!("{p}.norm1"), &b.norm1);
            push_dense(&mut out, &format!("{p}.query"), &b.query);
            push_dense(&mut out, &format!("{p}.key"), &b.key);
            push_dense(&mut out, &format!("{p}.value"), &b.value);
            push_dense(&mut out, &format!("{p}.attn_out"), &b.attn_out);
            push_norm(&mut out, &format!("{p}.norm2"), &b.norm2);
            push_dense(&mut out, &format!("{p}.mlp_in"), &b.mlp_in);
            push_dense(&mut out, &format!("{p}.mlp_out"), &b.mlp_out);
        }
        push_norm(&mut out, "final_norm", &self.final_norm);
        push_norm(&mut out, "projector.norm", &self.projector.norm);
        push_dense(&mut out, "projector.hidden", &self.projector.hidden);
        push_dense(&mut out, "projector.out", &self.projector.out);
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors),
    /// split into the encoder backbone and the projector.
    pub fn tensors_mut_split(&mut self) -> (Vec<&mut Tensor>, Vec<&mut Tensor>) {
        let mut backbone: Vec<&mut Tensor> = Vec::new();
        let Self {
            conv,
            mu_embed,
            sigma_embed,
            fuse,
            pos,
            cls,
            layers,
            final_norm,
            projector,
            ..
        } = self;
        for d in [conv, mu_embed, sigma_embed, fuse] {
            backbone.push(&mut d.weight);
            backbone.push(&mut d.bias);
        }
        backbone.push(pos);
        backbone.push(cls);
        for b in layers.iter_mut() {
            let Block {
                norm1,
                query,
                key,
                value,
                attn_out,
                norm2,
                mlp_in,
                mlp_out,
            } = b;
            backbone.push(&mut norm1.gamma);
            backbone.push(&mut norm1.beta);
            for d in [query, key, value, attn_out] {
                backbone.push(&mut d.weight);
                backbone.push(&mut d.bias);
            }
            backbone.push(&mut norm2.gamma);
            backbone.push(&mut norm2.beta);
            for d in [mlp_in, mlp_out] {
                backbone.push(&mut d.weight);
                backbone.push(&mut d.bias);
            }
        }
        backbone.push(&mut final_norm.gamma);
        backbone.push(&mut final_norm.beta);
        let Projector { norm, hidden, out } = projector;
        let head = vec![
            &mut norm.gamma,
            &mut norm.beta,
            &mut hidden.weight,
            &mut hidden.bias,
            &mut out.weight,
            &mut out.bias,
        ];
        (backbone, head)
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let (mut a, b) = self.tensors_mut_split();
        a.extend(b);
        a
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &EncoderParams) {
        let theirs: Vec<&Tensor> = other.named_tensors().into_iter().map(|(_, t)| t).collect();
        for (mine, t) in self.tensors_mut().into_iter().zip(theirs) {
            crate::linalg::add_assign(&mut mine.data, &t.data);
        }
    }

    /// Rounds every entry to the nearest `f32`, the precision checkpoints store.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases and norm
/// offsets, unit norm scales, Normal(0, 0.02) CLS and positions. Values are
/// rounded to `f32` so a checkpoint round trip is exact.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    cfg.validate()?;
    let mut rng = rng::stream(seed, &[domain::INIT]);
    let d = cfg.token_dim;
    let inner = cfg.inner_dim();
    let conv = Dense::init(cfg.cnn_channels, cfg.cnn_kernel, &mut rng);
    let mu_embed = Dense::init(cfg.stat_dim, 1, &mut rng);
    let sigma_embed = Dense::init(cfg.stat_dim, 1, &mut rng);
    let fuse = Dense::init(d, cfg.fused_dim(), &mut rng);
    let normal = Normal::new(0.0, 0.02).map_err(|e| Error::arg(e.to_string()))?;
    let mut pos = Tensor::zeros(&[cfg.tokens + cfg.cls_tokens, d]);
    pos.data
        .iter_mut()
        .for_each(|v| *v = normal.sample(&mut rng));
    let mut cls = Tensor::zeros(&[d]);
    cls.data
        .iter_mut()
        .for_each(|v| *v = normal.sample(&mut rng));
    let layers = (0..cfg.layers)
        .map(|_| Block {
            norm1: Norm::new(d),
            query: Dense::init(inner, d, &mut rng),
            key: Dense::init(inner, d, &mut rng),
            value: Dense::init(inner, d, &mut rng),
            attn_out: Dense::init(d, inner, &mut rng),
            norm2: Norm::new(d),
            mlp_in: Dense::init(cfg.mlp_dim, d, &mut rng),
            mlp_out: Dense::init(d, cfg.mlp_dim, &mut rng),
        })
        .collect();
    let projector = Projector {
        norm: Norm::new(d),
        hidden: Dense::init(cfg.proj_hidden, d, &mut rng),
        out: Dense::init(cfg.proj_out, cfg.proj_hidden, &mut rng),
    };
    let mut p = EncoderParams {
        config: cfg.clone(),
        conv,
        mu_embed,
        sigma_embed,
        fuse,
        pos,
        cls,
        layers,
        final_norm: Norm::new(d),
        projector,
    };
    p.round_to_f32();
    Ok(p)
}
