use super::model::{
    backward_encoder, backward_projector, encode, encode_with_tape, project, project_with_tape,
};
use super::params::EncoderParams;
use crate::augment::{apply_crop_resize, CropDraw};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::linalg;
use crate::training::similarity::{info_nce_with_grad, similarity_rows};

/// Views whose gradients are accumulated together before being added, in
/// order, to the batch total. Fixed so the reduction order never depends on
/// the number of worker threads.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub temperature: f64,
    /// Adds the loss with the roles of the two views swapped.
    pub symmetric: bool,
    pub jobs: usize,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            symmetric: false,
            jobs: 1,
        }
    }
}

/// Contrastive loss of one batch and its exact gradient with respect to
/// every encoder and projector tensor.
///
/// `draws[i]` augments example `i` into its query view and `draws[b + i]`
/// into its key view.
pub fn loss_and_gradients<S: AsRef<[f64]> + Sync>(
    params: &EncoderParams,
    batch: &[S],
    draws: &[CropDraw],
    opts: &LossOptions,
) -> Result<(f64, EncoderParams)> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::arg(format!(
            "contrastive loss needs at least 2 examples, got {b}"
        )));
    }
    if draws.len() != 2 * b {
        return Err(Error::arg(format!(
            "expected {} crop draws, got {}",
            2 * b,
            draws.len()
        )));
    }
    if !(opts.temperature > 0.0) {
        return Err(Error::arg("temperature must be positive"));
    }
    let views = (0..2 * b)
        .map(|i| apply_crop_resize(&draws[i], batch[i % b].as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let z = par_map(opts.jobs, &views, |v| project(params, &encode(params, v)?))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (za, zb) = z.split_at(b);
    let sim = similarity_rows(za, zb)?;
    let (mut loss, mut dsim) = info_nce_with_grad(&sim, opts.temperature)?;
    if opts.symmetric {
        let transposed: Vec<Vec<f64>> = (0..b)
            .map(|j| (0..b).map(|i| sim[i][j]).collect())
            .collect();
        let (l2, d2) = info_nce_with_grad(&transposed, opts.temperature)?;
        loss += l2;
        for i in 0..b {
            for j in 0..b {
                dsim[i][j] += d2[j][i];
            }
        }
    }

    // Back through the cosine normalization: d z = (d zhat - zhat (zhat . d zhat)) / |z|
    let norms: Vec<f64> = z.iter().map(|v| linalg::norm(v)).collect();
    let unit: Vec<Vec<f64>> = z
        .iter()
        .zip(&norms)
        .map(|(v, n)| v.iter().map(|x| x / n).collect())
        .collect();
    let width = z[0].len();
    let mut dunit = vec![vec![0.0; width]; 2 * b];
    for i in 0..b {
        for j in 0..b {
            let g = dsim[i][j];
            if g == 0.0 {
                continue;
            }
            for t in 0..width {
                dunit[i][t] += g * unit[b + j][t];
                dunit[b + j][t] += g * unit[i][t];
            }
        }
    }
    let dz: Vec<Vec<f64>> = (0..2 * b)
        .map(|i| {
            let proj = linalg::dot(&unit[i], &dunit[i]);
            (0..width)
                .map(|t| (dunit[i][t] - unit[i][t] * proj) / norms[i])
                .collect()
        })
        .collect();

    let chunks: Vec<Vec<usize>> = (0..2 * b)
        .collect::<Vec<_>>()
        .chunks(GRAD_CHUNK)
        .map(<[usize]>::to_vec)
        .collect();
    let mut grads = params.zeros_like();
    for wave in chunks.chunks(opts.jobs.max(1)) {
        let partial = par_map(opts.jobs, wave, |idx| -> Result<EncoderParams> {
            let mut g = params.zeros_like();
            for &i in idx {
                let (e, etape) = encode_with_tape(params, &views[i])?;
                let (_, ptape) = project_with_tape(params, &e)?;
                let de = backward_projector(params, &ptape, &dz[i], &mut g);
                backward_encoder(params, &etape, &de, &mut g);
            }
            Ok(g)
        });
        for g in partial {
            grads.add_assign(&g?);
        }
    }
    Ok((loss, grads))
}
