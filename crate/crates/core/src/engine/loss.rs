use ndarray::{Array2, Zip};

use crate::dataset::AnnotationState;
use crate::error::{Error, Result};

/// Masked binary cross-entropy value and its gradient with respect to logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBce {
    /// Mean BCE over known entries; 0 when nothing is known.
    pub loss: f64,
    /// d loss / d logit. Exactly 0 wherever the annotation is Unknown.
    pub grad: Array2<f64>,
    pub known: usize,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// BCE(sigmoid(x), y) in the numerically stable form
/// max(x, 0) - x*y + ln(1 + e^-|x|).
fn bce_with_logit(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

/// BCE averaged over the (sample, label) entries whose annotation is
/// Positive or Negative. Unknown entries contribute neither loss nor gradient.
pub fn masked_bce(logits: &Array2<f64>, annotations: &Array2<AnnotationState>) -> Result<MaskedBce> {
    if logits.dim() != annotations.dim() {
        return Err(Error::Contract(format!(
            "logits are {:?} but annotations are {:?}",
            logits.dim(),
            annotations.dim()
        )));
    }
    let known = annotations.iter().filter(|a| a.is_known()).count();
    let mut grad = Array2::<f64>::zeros(logits.dim());
    if known == 0 {
        return Ok(MaskedBce { loss: 0.0, grad, known });
    }
    let scale = 1.0 / known as f64;
    let mut sum = 0.0;
    for ((x, a), g) in logits.iter().zip(annotations.iter()).zip(grad.iter_mut()) {
        if let Some(y) = a.target() {
            sum += bce_with_logit(*x, y);
            *g = (sigmoid(*x) - y) * scale;
        }
    }
    Ok(MaskedBce {
        loss: sum * scale,
        grad,
        known,
    })
}

/// Element-wise sigmoid of a logit matrix.
pub fn probabilities(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.dim());
    Zip::from(&mut out).and(logits).for_each(|o, &x| *o = sigmoid(x));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use AnnotationState::*;

    #[test]
    fn zero_logits_give_ln2() {
        let out = masked_bce(&array![[0.0, 0.0, 0.0]], &array![[Positive, Negative, Unknown]]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(out.known, 2);
        assert_eq!(out.grad, array![[-0.25, 0.25, 0.0]]);
    }

    #[test]
    fn all_unknown_is_zero() {
        let out = masked_bce(&array![[3.0, -1.0], [0.5, 2.0]], &Array2::from_elem((2, 2), Unknown)).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(masked_bce(&array![[0.0, 0.0]], &array![[Positive]]).is_err());
    }

    #[test]
    fn stable_for_large_logits() {
        let out = masked_bce(&array![[800.0, -800.0]], &array![[Negative, Positive]]).unwrap();
        assert!((out.loss - 800.0).abs() < 1e-9);
        let out = masked_bce(&array![[800.0, -800.0]], &array![[Positive, Negative]]).unwrap();
        assert_eq!(out.loss, 0.0);
    }
}
