use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], truths: &[bool]) -> Result<()> {
    if scores.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} truths",
            scores.len(),
            truths.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("NaN score".into()));
    }
    Ok(())
}

/// Ranking used by every AP routine: score descending, ties broken by
/// ascending original index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Non-interpolated average precision: mean of precision@k over the ranks k
/// that hold a positive. `None` when there are no positives.
pub fn average_precision(scores: &[f64], truths: &[bool]) -> Result<Option<f64>> {
    check_inputs(scores, truths)?;
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, idx) in ranking(scores).into_iter().enumerate() {
        if truths[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), Some(1.0));
    }

    #[test]
    fn single_positive_last() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap(),
            Some(0.25)
        );
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), Some(0.5));
    }

    #[test]
    fn undefined_and_errors() {
        assert_eq!(average_precision(&[0.3, 0.2], &[false, false]).unwrap(), None);
        assert_eq!(average_precision(&[], &[]).unwrap(), None);
        assert!(average_precision(&[0.1], &[true, false]).is_err());
        assert!(average_precision(&[f64::NAN], &[true]).is_err());
    }
}
