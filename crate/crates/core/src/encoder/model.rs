use super::layers::{dense_backward, dense_forward, norm_backward, norm_forward, NormCache};
use super::params::{Block, EncoderParams};
use super::{Embedding, EncoderConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, gemm, Layout};

/// Intermediate values of the patch embedding stage.
#[derive(Clone, Debug)]
struct PatchTape {
    /// Convolution windows averaged over each patch, `[tokens, kernel]`.
    pooled_windows: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    /// `[tokens, channels + 2 * stat_dim]`
    concat: Vec<f64>,
}

#[derive(Clone, Debug)]
struct BlockTape {
    ln1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// One `n x n` attention matrix per head.
    probs: Vec<Vec<f64>>,
    o: Vec<f64>,
    ln2: NormCache,
    m: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation of `F`.
#[derive(Clone, Debug)]
pub struct EncoderTape {
    patch: PatchTape,
    blocks: Vec<BlockTape>,
    final_ln: NormCache,
}

#[derive(Clone, Debug)]
pub struct ProjectorTape {
    ln: NormCache,
    normed: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

fn check_finite(values: &[f64], stage: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage: stage() })
    }
}

fn check_len(cfg: &EncoderConfig, series: &[f64]) -> Result<()> {
    if series.len() != cfg.seq_len {
        return Err(Error::arg(format!(
            "encoder expects length {}, got {}",
            cfg.seq_len,
            series.len()
        )));
    }
    Ok(())
}

/// Convolution windows averaged over each non-overlapping patch.
///
/// Mean pooling commutes with the (linear) convolution, so pooling the
/// windows first and applying the kernel once per patch equals convolving
/// every position and pooling the outputs.
fn pooled_windows(cfg: &EncoderConfig, series: &[f64]) -> Vec<f64> {
    let k = cfg.cnn_kernel;
    let mut out = vec![0.0; cfg.tokens * k];
    let inv = 1.0 / cfg.patch_len as f64;
    for p in 0..cfg.tokens {
        let row = &mut out[p * k..(p + 1) * k];
        for t in p * cfg.patch_len..(p + 1) * cfg.patch_len {
            for (j, slot) in row.iter_mut().enumerate() {
                let src = t + j;
                if src >= cfg.cnn_pad && src - cfg.cnn_pad < series.len() {
                    *slot += series[src - cfg.cnn_pad];
                }
            }
        }
        row.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

fn patch_forward(params: &EncoderParams, series: &[f64]) -> (Vec<f64>, PatchTape) {
    let cfg = &params.config;
    let t = cfg.tokens;
    let pooled = pooled_windows(cfg, series);
    let conv = dense_forward(&pooled, t, &params.conv);

    let mut mu = vec![0.0; t];
    let mut sigma = vec![0.0; t];
    for p in 0..t {
        let patch = &series[p * cfg.patch_len..(p + 1) * cfg.patch_len];
        let m = patch.iter().sum::<f64>() / cfg.patch_len as f64;
        let var = patch.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / cfg.patch_len as f64;
        mu[p] = m;
        sigma[p] = var.sqrt();
    }
    let mu_emb = dense_forward(&mu, t, &params.mu_embed);
    let sigma_emb = dense_forward(&sigma, t, &params.sigma_embed);

    let (c, s) = (cfg.cnn_channels, cfg.stat_dim);
    let width = cfg.fused_dim();
    let mut concat = Vec::with_capacity(t * width);
    for p in 0..t {
        concat.extend_from_slice(&conv[p * c..(p + 1) * c]);
        concat.extend_from_slice(&mu_emb[p * s..(p + 1) * s]);
        concat.extend_from_slice(&sigma_emb[p * s..(p + 1) * s]);
    }
    let fused = dense_forward(&concat, t, &params.fuse);
    (
        fused,
        PatchTape {
            pooled_windows: pooled,
            mu,
            sigma,
            concat,
        },
    )
}

/// Token matrix `[tokens, token_dim]` for one series, before positions and CLS.
pub fn patch_tokens(params: &EncoderParams, series: &[f64]) -> Result<Vec<f64>> {
    check_len(&params.config, series)?;
    let (tokens, _) = patch_forward(params, series);
    check_finite(&tokens, || "patch embedding".into())?;
    Ok(tokens)
}

fn head_slice(x: &[f64], n: usize, inner: usize, h: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dh);
    for r in 0..n {
        out.extend_from_slice(&x[r * inner + h * dh..r * inner + (h + 1) * dh]);
    }
    out
}

fn scatter_head(dst: &mut [f64], src: &[f64], n: usize, inner: usize, h: usize, dh: usize) {
    for r in 0..n {
        dst[r * inner + h * dh..r * inner + (h + 1) * dh]
            .copy_from_slice(&src[r * dh..(r + 1) * dh]);
    }
}

fn block_forward(cfg: &EncoderConfig, b: &Block, x: &[f64], n: usize) -> (Vec<f64>, BlockTape) {
    let d = cfg.token_dim;
    let inner = cfg.inner_dim();
    let dh = cfg.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();

    let (a, ln1) = norm_forward(x, n, &b.norm1);
    let q = dense_forward(&a, n, &b.query);
    let k = dense_forward(&a, n, &b.key);
    let v = dense_forward(&a, n, &b.value);

    let mut o = vec![0.0; n * inner];
    let mut probs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = head_slice(&q, n, inner, h, dh);
        let kh = head_slice(&k, n, inner, h, dh);
        let vh = head_slice(&v, n, inner, h, dh);
        let mut p = vec![0.0; n * n];
        gemm(n, dh, n, scale, &qh, Layout::N, &kh, Layout::T, 0.0, &mut p);
        for row in p.chunks_mut(n) {
            linalg::softmax_in_place(row);
        }
        let mut oh = vec![0.0; n * dh];
        gemm(n, n, dh, 1.0, &p, Layout::N, &vh, Layout::N, 0.0, &mut oh);
        scatter_head(&mut o, &oh, n, inner, h, dh);
        probs.push(p);
    }
    let attn = dense_forward(&o, n, &b.attn_out);
    let mut h1 = x.to_vec();
    linalg::add_assign(&mut h1, &attn);

    let (m, ln2) = norm_forward(&h1, n, &b.norm2);
    let pre = dense_forward(&m, n, &b.mlp_in);
    let act: Vec<f64> = pre.iter().map(|&z| linalg::gelu(z)).collect();
    let mlp = dense_forward(&act, n, &b.mlp_out);
    let mut out = h1;
    linalg::add_assign(&mut out, &mlp);
    debug_assert_eq!(out.len(), n * d);
    (
        out,
        BlockTape {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            o,
            ln2,
            m,
            pre,
            act,
        },
    )
}

fn block_backward(
    cfg: &EncoderConfig,
    b: &Block,
    g: &mut Block,
    tape: &BlockTape,
    dout: &[f64],
    n: usize,
) -> Vec<f64> {
    let inner = cfg.inner_dim();
    let dh = cfg.head_dim;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dact = dense_backward(&tape.act, dout, n, &b.mlp_out, &mut g.mlp_out, true).unwrap();
    for (da, &z) in dact.iter_mut().zip(&tape.pre) {
        *da *= linalg::gelu_grad(z);
    }
    let dm = dense_backward(&tape.m, &dact, n, &b.mlp_in, &mut g.mlp_in, true).unwrap();
    let mut dh1 = dout.to_vec();
    linalg::add_assign(
        &mut dh1,
        &norm_backward(&dm, &tape.ln2, &b.norm2, &mut g.norm2),
    );

    let d_o = dense_backward(&tape.o, &dh1, n, &b.attn_out, &mut g.attn_out, true).unwrap();
    let mut dq = vec![0.0; n * inner];
    let mut dk = vec![0.0; n * inner];
    let mut dv = vec![0.0; n * inner];
    for h in 0..cfg.heads {
        let p = &tape.probs[h];
        let qh = head_slice(&tape.q, n, inner, h, dh);
        let kh = head_slice(&tape.k, n, inner, h, dh);
        let vh = head_slice(&tape.v, n, inner, h, dh);
        let doh = head_slice(&d_o, n, inner, h, dh);

        let mut dp = vec![0.0; n * n];
        gemm(n, dh, n, 1.0, &doh, Layout::N, &vh, Layout::T, 0.0, &mut dp);
        let mut dvh = vec![0.0; n * dh];
        gemm(n, n, dh, 1.0, p, Layout::T, &doh, Layout::N, 0.0, &mut dvh);
        // softmax adjoint, row by row
        for r in 0..n {
            let pr = &p[r * n..(r + 1) * n];
            let dr = &mut dp[r * n..(r + 1) * n];
            let s = linalg::dot(pr, dr);
            for (dv_, &pv) in dr.iter_mut().zip(pr) {
                *dv_ = pv * (*dv_ - s);
            }
        }
        let mut dqh = vec![0.0; n * dh];
        gemm(
            n,
            n,
            dh,
            scale,
            &dp,
            Layout::N,
            &kh,
            Layout::N,
            0.0,
            &mut dqh,
        );
        let mut dkh = vec![0.0; n * dh];
        gemm(
            n,
            n,
            dh,
            scale,
            &dp,
            Layout::T,
            &qh,
            Layout::N,
            0.0,
            &mut dkh,
        );
        scatter_head(&mut dq, &dqh, n, inner, h, dh);
        scatter_head(&mut dk, &dkh, n, inner, h, dh);
        scatter_head(&mut dv, &dvh, n, inner, h, dh);
    }
    let mut da = dense_backward(&tape.a, &dq, n, &b.query, &mut g.query, true).unwrap();
    linalg::add_assign(
        &mut da,
        &dense_backward(&tape.a, &dk, n, &b.key, &mut g.key, true).unwrap(),
    );
    linalg::add_assign(
        &mut da,
        &dense_backward(&tape.a, &dv, n, &b.value, &mut g.value, true).unwrap(),
    );
    let mut dx = dh1;
    linalg::add_assign(
        &mut dx,
        &norm_backward(&da, &tape.ln1, &b.norm1, &mut g.norm1),
    );
    dx
}

/// Forward pass of `F` that keeps the intermediates for [`backward_encoder`].
pub fn encode_with_tape(
    params: &EncoderParams,
    series: &[f64],
) -> Result<(Embedding, EncoderTape)> {
    let cfg = &params.config;
    check_len(cfg, series)?;
    let d = cfg.token_dim;
    let n = cfg.tokens + 1;

    let (fused, patch) = patch_forward(params, series);
    check_finite(&fused, || "patch embedding".into())?;
    let mut x = Vec::with_capacity(n * d);
    x.extend_from_slice(&params.cls.data);
    x.extend_from_slice(&fused);
    linalg::add_assign(&mut x, &params.pos.data);

    let mut blocks = Vec::with_capacity(cfg.layers);
    for (i, b) in params.layers.iter().enumerate() {
        let (y, tape) = block_forward(cfg, b, &x, n);
        check_finite(&y, || format!("transformer layer {i}"))?;
        blocks.push(tape);
        x = y;
    }
    let (e, final_ln) = norm_forward(&x[..d], 1, &params.final_norm);
    check_finite(&e, || "final norm".into())?;
    Ok((
        Embedding(e),
        EncoderTape {
            patch,
            blocks,
            final_ln,
        },
    ))
}

/// `F(x)`: the CLS output of the final norm.
pub fn encode(params: &EncoderParams, series: &[f64]) -> Result<Embedding> {
    encode_with_tape(params, series).map(|(e, _)| e)
}

/// Accumulates `d loss / d params` for the encoder given `d loss / d F(x)`.
pub fn backward_encoder(
    params: &EncoderParams,
    tape: &EncoderTape,
    d_emb: &[f64],
    grads: &mut EncoderParams,
) {
    let cfg = &params.config;
    let d = cfg.token_dim;
    let n = cfg.tokens + 1;
    let t = cfg.tokens;

    let d_cls_row = norm_backward(
        d_emb,
        &tape.final_ln,
        &params.final_norm,
        &mut grads.final_norm,
    );
    let mut dx = vec![0.0; n * d];
    dx[..d].copy_from_slice(&d_cls_row);
    for (i, b) in params.layers.iter().enumerate().rev() {
        dx = block_backward(cfg, b, &mut grads.layers[i], &tape.blocks[i], &dx, n);
    }
    linalg::add_assign(&mut grads.pos.data, &dx);
    linalg::add_assign(&mut grads.cls.data, &dx[..d]);

    let d_fused = &dx[d..];
    let dconcat = dense_backward(
        &tape.patch.concat,
        d_fused,
        t,
        &params.fuse,
        &mut grads.fuse,
        true,
    )
    .unwrap();
    let (c, s) = (cfg.cnn_channels, cfg.stat_dim);
    let width = cfg.fused_dim();
    let mut dconv = Vec::with_capacity(t * c);
    let mut dmu = Vec::with_capacity(t * s);
    let mut dsigma = Vec::with_capacity(t * s);
    for row in dconcat.chunks(width) {
        dconv.extend_from_slice(&row[..c]);
        dmu.extend_from_slice(&row[c..c + s]);
        dsigma.extend_from_slice(&row[c + s..]);
    }
    dense_backward(
        &tape.patch.pooled_windows,
        &dconv,
        t,
        &params.conv,
        &mut grads.conv,
        false,
    );
    dense_backward(
        &tape.patch.mu,
        &dmu,
        t,
        &params.mu_embed,
        &mut grads.mu_embed,
        false,
    );
    dense_backward(
        &tape.patch.sigma,
        &dsigma,
        t,
        &params.sigma_embed,
        &mut grads.sigma_embed,
        false,
    );
}

pub fn project_with_tape(
    params: &EncoderParams,
    e: &Embedding,
) -> Result<(Vec<f64>, ProjectorTape)> {
    let g = &params.projector;
    if e.0.len() != params.config.token_dim {
        return Err(Error::arg(format!(
            "projector expects width {}, got {}",
            params.config.token_dim,
            e.0.len()
        )));
    }
    let (normed, ln) = norm_forward(&e.0, 1, &g.norm);
    let pre = dense_forward(&normed, 1, &g.hidden);
    let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let z = dense_forward(&hidden, 1, &g.out);
    check_finite(&z, || "projector".into())?;
    Ok((
        z,
        ProjectorTape {
            ln,
            normed,
            pre,
            hidden,
        },
    ))
}

/// `g(e)`: norm, hidden map, ReLU, output map.
pub fn project(params: &EncoderParams, e: &Embedding) -> Result<Vec<f64>> {
    project_with_tape(params, e).map(|(z, _)| z)
}

/// Accumulates projector gradients and returns `d loss / d F(x)`.
pub fn backward_projector(
    params: &EncoderParams,
    tape: &ProjectorTape,
    dz: &[f64],
    grads: &mut EncoderParams,
) -> Vec<f64> {
    let g = &params.projector;
    let gg = &mut grads.projector;
    let mut dh = dense_backward(&tape.hidden, dz, 1, &g.out, &mut gg.out, true).unwrap();
    for (v, &z) in dh.iter_mut().zip(&tape.pre) {
        if z <= 0.0 {
            *v = 0.0;
        }
    }
    let dn = dense_backward(&tape.normed, &dh, 1, &g.hidden, &mut gg.hidden, true).unwrap();
    norm_backward(&dn, &tape.ln, &g.norm, &mut gg.norm)
}
