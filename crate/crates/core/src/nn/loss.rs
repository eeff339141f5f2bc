//! One-vs-rest hinge loss and the joint main + auxiliary objective.

use crate::error::{Error, Result};

/// `sum_c max(0, 1 - s_c t_c)` with `t_c = +1` for the true class, `-1` otherwise.
pub fn hinge_loss(scores: &[f64], label: usize) -> Result<f64> {
    if label >= scores.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: scores.len(),
        });
    }
    Ok(scores
        .iter()
        .enumerate()
        .map(|(c, &s)| {
            let t = if c == label { 1.0 } else { -1.0 };
            (1.0 - s * t).max(0.0)
        })
        .sum())
}

/// Hinge loss and its gradient with respect to the scores.
pub fn hinge_loss_grad(scores: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= scores.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: scores.len(),
        });
    }
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .enumerate()
        .map(|(c, &s)| {
            let t = if c == label { 1.0 } else { -1.0 };
            let margin = 1.0 - s * t;
            if margin > 0.0 {
                loss += margin;
                -t
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, grad))
}

/// Main hinge loss plus `sum_a lambda_a * hinge(aux_a)`.
pub fn joint_loss(main: &[f64], aux: &[Vec<f64>], label: usize, lambdas: &[f64]) -> Result<f64> {
    if aux.len() != lambdas.len() {
        return Err(Error::DimensionMismatch {
            expected: aux.len(),
            actual: lambdas.len(),
            context: "one auxiliary weight per head",
        });
    }
    let mut total = hinge_loss(main, label)?;
    for (scores, &lambda) in aux.iter().zip(lambdas) {
        if scores.len() != main.len() {
            return Err(Error::DimensionMismatch {
                expected: main.len(),
                actual: scores.len(),
                context: "auxiliary score length",
            });
        }
        if lambda != 0.0 {
            total += lambda * hinge_loss(scores, label)?;
        }
    }
    Ok(total)
}
