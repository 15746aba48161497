use crate::error::{Error, Result};

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::data(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::data("no predictions to score"));
    }
    Ok(())
}

/// Fraction of predictions equal to the truth.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `counts[truth][pred]`.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    check_lengths(pred, truth)?;
    let mut counts = vec![vec![0; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::data(format!(
                "label {} out of range for {n_classes} classes",
                p.max(t)
            )));
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// Unweighted mean over all `n_classes` of `TP/(TP+FP)`. A class that is
/// never predicted contributes 0.
pub fn macro_precision(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    let cm = confusion_matrix(pred, truth, n_classes)?;
    let total: f64 = (0..n_classes)
        .map(|c| {
            let tp = cm[c][c];
            let predicted: usize = cm.iter().map(|row| row[c]).sum();
            if predicted == 0 {
                0.0
            } else {
                tp as f64 / predicted as f64
            }
        })
        .sum();
    Ok(total / n_classes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 0, 1], &[0, 1, 1, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 1, 1, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn precision_examples() {
        assert_eq!(macro_precision(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert_eq!(macro_precision(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap(), 0.25);
        assert_eq!(macro_precision(&[0, 0], &[0, 0], 1).unwrap(), 1.0);
        assert!(macro_precision(&[0, 3], &[0, 1], 2).is_err());
    }
}
