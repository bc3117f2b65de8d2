//! Cosine similarity, the batch similarity matrix and the InfoNCE loss.

use crate::error::{Error, Result};
use crate::linalg;

const MIN_NORM: f64 = 1e-12;

/// `q.k / (|q| |k|)`
pub fn cosine_similarity(q: &[f64], k: &[f64]) -> Result<f64> {
    if q.len() != k.len() {
        return Err(Error::arg(format!(
            "cosine of lengths {} and {}",
            q.len(),
            k.len()
        )));
    }
    let (nq, nk) = (linalg::norm(q), linalg::norm(k));
    if nq <= MIN_NORM || nk <= MIN_NORM {
        return Err(Error::NumericalDegeneracy(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((linalg::dot(q, k) / (nq * nk)).clamp(-1.0, 1.0))
}

/// Rows scaled to unit length; names the first zero row otherwise.
pub fn normalize_rows<R: AsRef<[f64]>>(rows: &[R], which: &str) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let r = r.as_ref();
            let n = linalg::norm(r);
            if n <= MIN_NORM || !n.is_finite() {
                return Err(Error::NumericalDegeneracy(format!(
                    "{which} row {i} has zero norm"
                )));
            }
            Ok(r.iter().map(|v| v / n).collect())
        })
        .collect()
}

/// Entry `(i, j)` is the cosine similarity of row `i` of `a` and row `j` of `b`;
/// row `i` is the similarity vector of example `i` against the batch.
pub fn similarity_rows<R: AsRef<[f64]>>(a: &[R], b: &[R]) -> Result<Vec<Vec<f64>>> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "similarity of {} and {} rows",
            a.len(),
            b.len()
        )));
    }
    let na = normalize_rows(a, "first view")?;
    let nb = normalize_rows(b, "second view")?;
    if let (Some(x), Some(y)) = (na.first(), nb.first()) {
        if x.len() != y.len() {
            return Err(Error::arg("views have different widths"));
        }
    }
    Ok(na
        .iter()
        .map(|x| {
            nb.iter()
                .map(|y| linalg::dot(x, y).clamp(-1.0, 1.0))
                .collect()
        })
        .collect())
}

fn check_square(sim: &[Vec<f64>], temperature: f64) -> Result<()> {
    if !(temperature > 0.0) {
        return Err(Error::arg(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if sim.is_empty() {
        return Err(Error::arg("InfoNCE of an empty batch"));
    }
    if sim.iter().any(|r| r.len() != sim.len()) {
        return Err(Error::arg("similarity matrix must be square"));
    }
    if sim.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: "similarity matrix".into(),
        });
    }
    Ok(())
}

/// Sum over rows of the cross-entropy of `softmax(row / T)` against the
/// diagonal target.
pub fn info_nce(sim: &[Vec<f64>], temperature: f64) -> Result<f64> {
    info_nce_with_grad(sim, temperature).map(|(l, _)| l)
}

/// Loss and its derivative with respect to every similarity entry.
pub fn info_nce_with_grad(sim: &[Vec<f64>], temperature: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    check_square(sim, temperature)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(sim.len());
    for (i, row) in sim.iter().enumerate() {
        let mut logits: Vec<f64> = row.iter().map(|s| s / temperature).collect();
        loss += linalg::log_sum_exp(&logits) - logits[i];
        linalg::softmax_in_place(&mut logits);
        logits[i] -= 1.0;
        logits.iter_mut().for_each(|g| *g /= temperature);
        grad.push(logits);
    }
    Ok((loss, grad))
}
