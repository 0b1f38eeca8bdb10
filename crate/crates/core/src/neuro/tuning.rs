//! Tuning curves, selectivity and detector classification.

use serde::{Deserialize, Serialize};

use crate::error::{EclError, Result};
use crate::models::{ActivationTrace, NUM_CLASSES};
use crate::neuro::stats::{log_fit, permutations, spearman_test, LinearFit, PERMUTATIONS, PERMUTATION_SEED};
use crate::scalar::Scalar;

/// Added to the mean in the selectivity denominator.
pub const SELECTIVITY_EPS: f64 = 1e-8;
/// Significance level for detector classification.
pub const DETECTOR_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorClass {
    Positive,
    Negative,
    None,
}

impl DetectorClass {
    pub fn name(self) -> &'static str {
        match self {
            DetectorClass::Positive => "positive",
            DetectorClass::Negative => "negative",
            DetectorClass::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub unit: usize,
    pub layer: usize,
    /// Mean final-step activation for numerosities 1..10.
    pub means: Vec<f64>,
}

/// Mean final-timestep activation of every unit of `layer`, per numerosity.
/// Returns `numerosities x units`.
pub fn class_means<S: Scalar>(traces: &[ActivationTrace<S>], layer: usize) -> Result<Vec<Vec<f64>>> {
    let units = match traces.first() {
        Some(t) => t.layer(layer)?.dim(1),
        None => return Err(EclError::IncompleteCoverage(1)),
    };
    let mut sums = vec![vec![0.0; units]; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for tr in traces {
        if tr.label == 0 || tr.label > NUM_CLASSES {
            return Err(EclError::Label {
                label: tr.label,
                classes: NUM_CLASSES,
            });
        }
        let state = tr.final_state(layer)?;
        if state.len() != units {
            return Err(EclError::Dimension(format!(
                "trace {} has {} units, expected {units}",
                tr.episode_id,
                state.len()
            )));
        }
        for (s, &v) in sums[tr.label - 1].iter_mut().zip(state) {
            *s += v.as_f64();
        }
        counts[tr.label - 1] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(EclError::IncompleteCoverage(k + 1));
    }
    for (row, &c) in sums.iter_mut().zip(&counts) {
        row.iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(sums)
}

pub fn tuning_curves<S: Scalar>(traces: &[ActivationTrace<S>], layer: usize) -> Result<Vec<TuningCurve>> {
    let means = class_means(traces, layer)?;
    let units = means[0].len();
    Ok((0..units)
        .map(|u| TuningCurve {
            unit: u,
            layer,
            means: means.iter().map(|row| row[u]).collect(),
        })
        .collect())
}

/// `S = sigma / (mu + eps)` with the population standard deviation.
pub fn selectivity(curve: &[f64]) -> f64 {
    if curve.iter().all(|&v| v == curve[0]) {
        return 0.0;
    }
    let n = curve.len() as f64;
    let mu = curve.iter().sum::<f64>() / n;
    let var = curve.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    var.sqrt() / (mu + SELECTIVITY_EPS)
}

/// Flags the units at or above the 90th percentile of selectivity: the top
/// `ceil(0.1 U)` values (more only when the cut-off value is tied).
pub fn flag_selective(s: &[f64]) -> Vec<bool> {
    if s.is_empty() {
        return Vec::new();
    }
    let keep = (s.len() as f64 * 0.1).ceil() as usize;
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cut = sorted[keep - 1];
    s.iter().map(|&v| v >= cut).collect()
}

/// 1-based numerosity of the curve's maximum (lowest on ties).
pub fn preferred_numerosity(curve: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = i;
        }
    }
    best + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub classes: Vec<DetectorClass>,
    pub rho: Vec<Option<f64>>,
    pub p: Vec<Option<f64>>,
    /// Log fit of the positive class-mean curve, if the class is nonempty.
    pub positive_fit: Option<LinearFit>,
    pub negative_fit: Option<LinearFit>,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Positive/negative monotonic detectors by Spearman rho against 1..10 with a
/// permutation p-value, plus log fits of each class's mean curve.
pub fn classify_detectors(curves: &[Vec<f64>]) -> DetectorSummary {
    let perms = permutations(NUM_CLASSES, PERMUTATIONS, PERMUTATION_SEED);
    let numerosity: Vec<f64> = (1..=NUM_CLASSES).map(|n| n as f64).collect();
    let mut classes = Vec::with_capacity(curves.len());
    let mut rhos = Vec::with_capacity(curves.len());
    let mut ps = Vec::with_capacity(curves.len());
    for curve in curves {
        let test = spearman_test(&numerosity, curve, &perms);
        let class = match test {
            Some((rho, p)) if p < DETECTOR_ALPHA && rho > 0.0 => DetectorClass::Positive,
            Some((rho, p)) if p < DETECTOR_ALPHA && rho < 0.0 => DetectorClass::Negative,
            _ => DetectorClass::None,
        };
        classes.push(class);
        rhos.push(test.map(|t| t.0));
        ps.push(test.map(|t| t.1));
    }
    let fit_class = |which: DetectorClass| -> (usize, Option<LinearFit>) {
        let members: Vec<&Vec<f64>> = curves.iter().zip(&classes).filter(|(_, &c)| c == which).map(|(v, _)| v).collect();
        if members.is_empty() {
            return (0, None);
        }
        let mean: Vec<f64> = (0..NUM_CLASSES)
            .map(|k| members.iter().map(|c| c[k]).sum::<f64>() / members.len() as f64)
            .collect();
        (members.len(), Some(log_fit(&numerosity, &mean)))
    };
    let (n_positive, positive_fit) = fit_class(DetectorClass::Positive);
    let (n_negative, negative_fit) = fit_class(DetectorClass::Negative);
    DetectorSummary {
        classes,
        rho: rhos,
        p: ps,
        positive_fit,
        negative_fit,
        n_positive,
        n_negative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn selectivity_examples() {
        assert_eq!(selectivity(&[0.4; 10]), 0.0);
        let mut spike = vec![0.0; 10];
        spike[0] = 1.0;
        // mu = 0.1, sigma = sqrt(0.1 * 0.81 + 0.9 * 0.01) = 0.3
        assert!((selectivity(&spike) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn percentile_flags_top_tenth() {
        for units in [1usize, 9, 10, 11, 128] {
            let s: Vec<f64> = (0..units).map(|u| ((u * 37) % units) as f64).collect();
            let flagged = flag_selective(&s).iter().filter(|&&f| f).count();
            assert_eq!(flagged, (units as f64 * 0.1).ceil() as usize);
        }
    }

    #[test]
    fn monotone_curves_are_detectors() {
        let up: Vec<f64> = (1..=10).map(f64::from).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let log: Vec<f64> = up.iter().map(|v| v.ln()).collect();
        let flat = vec![1.0; 10];
        let s = classify_detectors(&[up, down, log, flat]);
        assert_eq!(
            s.classes,
            vec![DetectorClass::Positive, DetectorClass::Negative, DetectorClass::Positive, DetectorClass::None]
        );
        assert_eq!(s.rho[0], Some(1.0));
        assert_eq!(s.rho[1], Some(-1.0));
        assert_eq!(s.rho[3], None);
        assert_eq!((s.n_positive, s.n_negative), (2, 1));
        assert_eq!(s.negative_fit.unwrap().slope < 0.0, true);

        let only_log = classify_detectors(&[(1..=10).map(|n| (n as f64).ln()).collect()]);
        assert!((only_log.positive_fit.unwrap().r2.unwrap() - 1.0).abs() < 1e-12);
    }

    fn trace(label: usize, value: f64) -> ActivationTrace<f64> {
        let t = Tensor::full(&[label, 3], value);
        ActivationTrace {
            episode_id: format!("{label}"),
            label,
            layer1: t.clone(),
            layer2: t,
            visual: Tensor::zeros(&[label, 2]),
            final_maps: Tensor::zeros(&[1, 1, 1]),
        }
    }

    #[test]
    fn curves_average_final_states_and_require_coverage() {
        let mut traces: Vec<_> = (1..=10).map(|n| trace(n, n as f64)).collect();
        traces.push(trace(4, 6.0));
        let curves = tuning_curves(&traces, 2).unwrap();
        assert_eq!(curves.len(), 3);
        assert_eq!(curves[0].means[3], 5.0);
        assert_eq!(preferred_numerosity(&curves[0].means), 10);
        traces.retain(|t| t.label != 7);
        assert!(matches!(tuning_curves(&traces, 1), Err(EclError::IncompleteCoverage(7))));
    }
}
