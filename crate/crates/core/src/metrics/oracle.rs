//! Brute-force AP reference used to pin the fast implementation.
//!
//! Shares nothing with [`super::average_precision`] except the tie-break
//! rule: every item is its own threshold, ordered by (score desc, index asc).

use crate::error::{Error, Result};

fn outranks_or_equal(scores: &[f64], i: usize, t: usize) -> bool {
    scores[i] > scores[t] || (scores[i] == scores[t] && i <= t)
}

/// Builds the full precision/recall step function by enumerating every
/// threshold and sums precision x recall increment. O(n^2).
pub fn ap_bruteforce_oracle(scores: &[f64], truths: &[bool]) -> Result<Option<f64>> {
    if scores.len() != truths.len() {
        return Err(Error::Contract("scores and truths differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("NaN score".into()));
    }
    let total_pos = truths.iter().filter(|&&t| t).count();
    if total_pos == 0 {
        return Ok(None);
    }

    // (predicted positive count, true positive count) per threshold
    let mut points: Vec<(usize, usize)> = (0..scores.len())
        .map(|t| {
            let mut predicted = 0;
            let mut tp = 0;
            for i in 0..scores.len() {
                if outranks_or_equal(scores, i, t) {
                    predicted += 1;
                    if truths[i] {
                        tp += 1;
                    }
                }
            }
            (predicted, tp)
        })
        .collect();
    points.sort_unstable();

    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (predicted, tp) in points {
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / predicted as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    Ok(Some(ap))
}
