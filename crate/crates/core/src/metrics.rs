//! Prediction-error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root normalized MSE over a window of predictions:
/// `sqrt( sum_t ||pred_t - truth_t||^2 / sum_t ||truth_t||^2 )`.
pub fn rnmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted steps vs {} truth steps",
            pred.len(),
            truth.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, (p, x)) in pred.iter().zip(truth).enumerate() {
        if p.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "step {t}: {} predicted entries vs {}",
                p.len(),
                x.len()
            )));
        }
        for (pi, xi) in p.iter().zip(x) {
            let e = pi - xi;
            num += e * e;
            den += xi * xi;
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedNormalization(
            "truth signal is identically zero".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// Detailed evaluation of a prediction window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// rNMSE over all evaluated steps.
    pub rnmse: f64,
    /// Per-step normalized errors `||e_t|| / ||x_t||` (NaN when `x_t` is zero).
    pub per_step_rnmse: Vec<f64>,
    /// Mean squared error per node, averaged over steps and features.
    pub per_node_mse: Vec<f64>,
    /// Per-feature rNMSE, when the signal has more than one feature.
    pub per_feature_rnmse: Option<Vec<f64>>,
    /// Number of evaluated steps.
    pub n_steps: usize,
}

/// Evaluate predictions against truth over the same window.
///
/// Signals are node-major with `n_features` entries per node.
pub fn evaluate(pred: &[Vec<f64>], truth: &[Vec<f64>], n_features: usize) -> Result<EvalReport> {
    let overall = rnmse(pred, truth)?;
    let width = truth[0].len();
    if n_features == 0 || !width.is_multiple_of(n_features) {
        return Err(Error::InvalidShape(format!(
            "width {width} not divisible by F = {n_features}"
        )));
    }
    let n_nodes = width / n_features;
    let tau = truth.len();

    let per_step_rnmse: Vec<f64> = pred
        .iter()
        .zip(truth)
        .map(|(p, x)| {
            let num: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = x.iter().map(|b| b * b).sum();
            (num / den).sqrt()
        })
        .collect();

    let mut per_node_mse = vec![0.0; n_nodes];
    for (p, x) in pred.iter().zip(truth) {
        for i in 0..n_nodes {
            for f in 0..n_features {
                let e = p[i * n_features + f] - x[i * n_features + f];
                per_node_mse[i] += e * e;
            }
        }
    }
    per_node_mse
        .iter_mut()
        .for_each(|v| *v /= (tau * n_features) as f64);

    let per_feature_rnmse = if n_features > 1 {
        let mut out = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let mut num = 0.0;
            let mut den = 0.0;
            for (p, x) in pred.iter().zip(truth) {
                for i in 0..n_nodes {
                    let e = p[i * n_features + f] - x[i * n_features + f];
                    num += e * e;
                    den += x[i * n_features + f] * x[i * n_features + f];
                }
            }
            out.push((num / den).sqrt());
        }
        Some(out)
    } else {
        None
    };

    Ok(EvalReport {
        rnmse: overall,
        per_step_rnmse,
        per_node_mse,
        per_feature_rnmse,
        n_steps: tau,
    })
}
