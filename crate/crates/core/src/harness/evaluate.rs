//! Validation metrics.

use rayon::prelude::*;

use crate::error::{EclError, Result};
use crate::models::{predicted_class, CountingModel, SequenceInput, NUM_CLASSES};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Accuracy per numerosity 1..10; `None` when a numerosity is absent.
    pub per_number: Vec<Option<f64>>,
    /// Squared joint error averaged over all valid steps; `None` without a
    /// motor head.
    pub motor_mse: Option<f64>,
}

/// Scores any predictor returning `(logits, motor predictions)`.
pub fn evaluate_with<S, F>(inputs: &[&SequenceInput<S>], predict: F) -> Result<Evaluation>
where
    S: Scalar,
    F: Fn(&SequenceInput<S>) -> Result<(Vec<S>, Option<Tensor<S>>)> + Sync,
{
    if inputs.is_empty() {
        return Err(EclError::EmptySequence("evaluation split is empty"));
    }
    let outcomes = inputs
        .par_iter()
        .map(|input| {
            let (logits, motor) = predict(input)?;
            let sq_err = motor.map(|m| {
                m.data()
                    .chunks_exact(2)
                    .zip(&input.targets)
                    .map(|(p, t)| {
                        let (a, b) = ((p[0] - t[0]).as_f64(), (p[1] - t[1]).as_f64());
                        a * a + b * b
                    })
                    .sum::<f64>()
            });
            Ok((predicted_class(&logits) == input.label, sq_err))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hits = [0usize; NUM_CLASSES];
    let mut totals = [0usize; NUM_CLASSES];
    let mut sq_sum = 0.0;
    let mut steps = 0usize;
    let mut has_motor = true;
    for (input, (correct, sq)) in inputs.iter().zip(&outcomes) {
        let k = input.label - 1;
        totals[k] += 1;
        hits[k] += usize::from(*correct);
        match sq {
            Some(v) => {
                sq_sum += v;
                steps += input.len();
            }
            None => has_motor = false,
        }
    }
    let n_correct: usize = hits.iter().sum();
    Ok(Evaluation {
        accuracy: n_correct as f64 / inputs.len() as f64,
        per_number: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect(),
        motor_mse: (has_motor && steps > 0).then(|| sq_sum / steps as f64),
    })
}

/// Evaluation-mode scores of a model on a split.
pub fn evaluate<S: Scalar>(model: &CountingModel<S>, inputs: &[&SequenceInput<S>]) -> Result<Evaluation> {
    evaluate_with(inputs, |input| {
        let p = model.predict(input)?;
        Ok((p.logits, p.motor_preds))
    })
}
