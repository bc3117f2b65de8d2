//! Forward and adjoint kernels for the dense building blocks.

use super::params::{Dense, Norm};
use crate::linalg::{gemm, Layout};

pub(crate) const LN_EPS: f64 = 1e-5;

/// `y = x W^T + b` over `rows` rows.
pub(crate) fn dense_forward(x: &[f64], rows: usize, d: &Dense) -> Vec<f64> {
    let (out, inp) = (d.out_dim(), d.in_dim());
    let mut y = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        y.extend_from_slice(&d.bias.data);
    }
    gemm(
        rows,
        inp,
        out,
        1.0,
        x,
        Layout::N,
        &d.weight.data,
        Layout::T,
        1.0,
        &mut y,
    );
    y
}

/// Accumulates weight and bias gradients into `g`; returns `dy W` when asked.
pub(crate) fn dense_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    d: &Dense,
    g: &mut Dense,
    want_dx: bool,
) -> Option<Vec<f64>> {
    let (out, inp) = (d.out_dim(), d.in_dim());
    gemm(
        out,
        rows,
        inp,
        1.0,
        dy,
        Layout::T,
        x,
        Layout::N,
        1.0,
        &mut g.weight.data,
    );
    for r in 0..rows {
        for (gb, v) in g.bias.data.iter_mut().zip(&dy[r * out..(r + 1) * out]) {
            *gb += v;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; rows * inp];
        gemm(
            rows,
            out,
            inp,
            1.0,
            dy,
            Layout::N,
            &d.weight.data,
            Layout::N,
            0.0,
            &mut dx,
        );
        dx
    })
}

/// Normalized inputs and reciprocal standard deviations per row.
#[derive(Clone, Debug)]
pub(crate) struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn norm_forward(x: &[f64], rows: usize, n: &Norm) -> (Vec<f64>, NormCache) {
    let dim = n.gamma.len();
    let mut y = vec![0.0; rows * dim];
    let mut xhat = vec![0.0; rows * dim];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..dim {
            let h = (row[j] - mean) * rs;
            xhat[r * dim + j] = h;
            y[r * dim + j] = h * n.gamma.data[j] + n.beta.data[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub(crate) fn norm_backward(dy: &[f64], cache: &NormCache, n: &Norm, g: &mut Norm) -> Vec<f64> {
    let dim = n.gamma.len();
    let rows = cache.rstd.len();
    let mut dx = vec![0.0; rows * dim];
    let mut dxhat = vec![0.0; dim];
    for r in 0..rows {
        let xh = &cache.xhat[r * dim..(r + 1) * dim];
        let dyr = &dy[r * dim..(r + 1) * dim];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for j in 0..dim {
            g.gamma.data[j] += dyr[j] * xh[j];
            g.beta.data[j] += dyr[j];
            dxhat[j] = dyr[j] * n.gamma.data[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
        }
        mean_d /= dim as f64;
        mean_dx /= dim as f64;
        for j in 0..dim {
            dx[r * dim + j] = cache.rstd[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}
