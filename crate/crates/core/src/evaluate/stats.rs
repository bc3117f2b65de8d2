use crate::error::{Error, Result};

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::arg(format!(
            "pearson of lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let scale = |v: &[f64], m: f64| v.iter().map(|x| x.abs()).fold(m.abs(), f64::max);
    if sxx <= (1e-12 * scale(xs, mx)).powi(2) * n || sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("first list is constant".into()));
    }
    if syy <= (1e-12 * scale(ys, my)).powi(2) * n || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "second list is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
