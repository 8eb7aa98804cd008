use serde::{Deserialize, Serialize};

use crate::density::{binned_mi, discrete_entropy, kde_mi, BinnedConfig, KdeConfig};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Fraction of matching labels.
pub fn accuracy(pred: &[usize], y: &[usize]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", pred.len(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::Argument("accuracy of an empty split".into()));
    }
    Ok(pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub per_concept: Vec<f64>,
    /// Mean over concepts.
    pub aggregate: f64,
}

pub fn concept_rmse(c_hat: &Matrix, c: &Matrix) -> Result<RmseSummary> {
    if c_hat.shape() != c.shape() {
        return Err(Error::Shape(format!("predicted {:?} vs true {:?}", c_hat.shape(), c.shape())));
    }
    if c.rows() == 0 || c.cols() == 0 {
        return Err(Error::Argument("concept rmse of an empty split".into()));
    }
    let n = c.rows() as f64;
    let mut sums = vec![0.0; c.cols()];
    for r in 0..c.rows() {
        for ((s, p), t) in sums.iter_mut().zip(c_hat.row(r)).zip(c.row(r)) {
            *s += (p - t) * (p - t);
        }
    }
    let per_concept: Vec<f64> = sums.into_iter().map(|s| (s / n).sqrt()).collect();
    let aggregate = per_concept.iter().sum::<f64>() / per_concept.len() as f64;
    Ok(RmseSummary { per_concept, aggregate })
}

/// Label information in the predicted column beyond the true column,
/// normalised by the label entropy and clamped at zero.
pub fn ctl_metric(c_hat: &[f64], c: &[f64], y: &[usize], config: &KdeConfig) -> Result<f64> {
    if c_hat.len() != c.len() {
        return Err(Error::Shape(format!("columns of length {} and {}", c_hat.len(), c.len())));
    }
    let h = discrete_entropy(y)?;
    if h <= 0.0 {
        return Err(Error::Argument("degenerate labels: label entropy is zero".into()));
    }
    let delta = kde_mi(c_hat, y, config)? - kde_mi(c, y, config)?;
    Ok((delta / h).max(0.0))
}

/// Information shared by two predicted columns beyond what their true
/// counterparts share, normalised by the predicted entropies. A constant
/// predicted column gives zero.
pub fn icl_metric(
    c_hat_i: &[f64],
    c_hat_j: &[f64],
    c_i: &[f64],
    c_j: &[f64],
    config: &BinnedConfig,
) -> Result<f64> {
    let n = c_hat_i.len();
    if c_hat_j.len() != n || c_i.len() != n || c_j.len() != n {
        return Err(Error::Shape("inter-concept leakage columns differ in length".into()));
    }
    let pred = binned_mi(c_hat_i, c_hat_j, config)?;
    if pred.h_u <= 0.0 || pred.h_v <= 0.0 {
        return Ok(0.0);
    }
    let truth = binned_mi(c_i, c_j, config)?;
    Ok(((pred.mi - truth.mi) / (pred.h_u * pred.h_v).sqrt()).max(0.0))
}
