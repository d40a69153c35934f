use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::scalar::{softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// `correct / total`.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Mean log loss, for models that produce probabilities.
    pub log_loss: Option<f64>,
}

/// Share of predictions equal to the label.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<EvalResult, LearnError> {
    if predictions.len() != labels.len() {
        return Err(LearnError::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if labels.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(EvalResult { accuracy: correct as f64 / labels.len() as f64, correct, total: labels.len(), log_loss: None })
}

/// Mean log loss from logits, computed stably as softplus(z) - y·z.
pub fn log_loss_from_logits<T: Scalar>(logits: &[T], labels: &[u8]) -> T {
    if logits.is_empty() {
        return T::zero();
    }
    let sum: T = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| if y == 1 { softplus(z) - z } else { softplus(z) })
        .sum();
    sum / T::from_usize(logits.len()).expect("count fits")
}

pub fn check_labels(labels: &[u8]) -> Result<(), LearnError> {
    match labels.iter().find(|&&y| y > 1) {
        Some(&bad) => Err(LearnError::NonBinaryLabels(bad)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_of_ten() {
        let y = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        let mut p = y;
        p[3] = 0;
        let r = accuracy(&p, &y).unwrap();
        assert_eq!((r.accuracy, r.correct, r.total), (0.9, 9, 10));
        assert_eq!(accuracy(&y, &y).unwrap().accuracy, 1.0);
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(accuracy(&flipped, &y).unwrap().accuracy, 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(accuracy(&[1], &[1, 0]), Err(LearnError::LengthMismatch { .. })));
        assert!(matches!(accuracy(&[], &[]), Err(LearnError::EmptyInput)));
        assert!(matches!(check_labels(&[0, 2]), Err(LearnError::NonBinaryLabels(2))));
    }

    #[test]
    fn log_loss_at_zero_logit() {
        let l: f64 = log_loss_from_logits(&[0.0, 0.0], &[0, 1]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
