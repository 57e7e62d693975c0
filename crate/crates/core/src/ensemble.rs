//! Element-wise averaging of post-sigmoid score matrices.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scores::ScoreMatrix;

/// Member weights; `None` in [`average_scores`] means uniform.
pub fn normalize_weights(weights: &[f64], members: usize) -> Result<Vec<f64>> {
    if weights.len() != members {
        return Err(Error::Incompatible(format!(
            "{} weights for {members} ensemble members",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Config("ensemble weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Weighted element-wise mean of `matrices`. Outputs are clamped to the
/// element-wise [min, max] of the inputs so rounding never leaves that range.
pub fn average_scores(matrices: &[ScoreMatrix], weights: Option<&[f64]>) -> Result<ScoreMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Config("an ensemble needs at least one member".into()))?;
    for (k, m) in matrices.iter().enumerate().skip(1) {
        if !m.same_binding(first) || m.values().dim() != first.values().dim() {
            return Err(Error::Incompatible(format!(
                "ensemble member {k} differs in shape, labels or row keys from member 0"
            )));
        }
    }
    let dim = first.values().dim();
    let mut out = Array2::<f64>::zeros(dim);
    match weights {
        None => {
            for m in matrices {
                out += m.values();
            }
            out /= matrices.len() as f64;
        }
        Some(w) => {
            let w = normalize_weights(w, matrices.len())?;
            for (m, wk) in matrices.iter().zip(w) {
                out.scaled_add(wk, m.values());
            }
        }
    }
    for ((i, j), v) in out.indexed_iter_mut() {
        let (lo, hi) = matrices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            let x = m.values()[[i, j]];
            (lo.min(x), hi.max(x))
        });
        *v = v.clamp(lo, hi);
    }
    ScoreMatrix::new(first.labels().to_vec(), first.image_refs().to_vec(), out)
}
