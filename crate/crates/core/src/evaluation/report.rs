use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::density::{BinnedConfig, KdeConfig};
use crate::model::{argmax_rows, CbmModel};
use crate::{Error, Result, TOOL_VERSION};

use super::{accuracy, concept_rmse, ctl_metric, icl_metric};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub kde: KdeConfig,
    pub binned: BinnedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub version: u32,
    pub tool_version: String,
    pub split: Split,
    pub n_samples: usize,
    pub accuracy_pct: f64,
    pub concept_names: Vec<String>,
    pub rmse: Vec<f64>,
    pub c_rmse: f64,
    pub ctl: Vec<f64>,
    pub mean_ctl: f64,
    /// Symmetric `k × k`, zero diagonal.
    pub icl: Vec<Vec<f64>>,
    /// Mean over pairs `i < j`.
    pub mean_icl: f64,
    pub aggregate_leakage: f64,
    pub config_fingerprint: String,
    pub seed: u64,
}

impl FaithfulnessReport {
    /// Mean inter-concept leakage of each concept against all others.
    pub fn icl_per_concept(&self) -> Vec<f64> {
        let k = self.icl.len();
        if k < 2 {
            return vec![0.0; k];
        }
        self.icl
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum::<f64>() / (k - 1) as f64)
            .collect()
    }
}

/// Evaluates `model` on one split of `dataset` using the full split for
/// every information estimate.
pub fn evaluate(model: &CbmModel, dataset: &Dataset, split: Split, config: &EvalConfig) -> Result<FaithfulnessReport> {
    if model.k() != dataset.k() {
        return Err(Error::Shape(format!(
            "checkpoint has k = {} concepts, dataset has k = {}",
            model.k(),
            dataset.k()
        )));
    }
    if model.input_width() != dataset.z_width() {
        return Err(Error::Shape(format!(
            "checkpoint expects embeddings of width {}, dataset provides {}",
            model.input_width(),
            dataset.z_width()
        )));
    }
    if model.concept_names != dataset.concept_names || model.label_names != dataset.label_names {
        return Err(Error::Argument("model and dataset disagree on concept or label names".into()));
    }
    let data = dataset.split(split);
    if data.is_empty() {
        return Err(Error::Argument(format!("split {split} is empty")));
    }
    let pred = model.forward(&data.z)?;
    let acc = accuracy(&argmax_rows(&pred.logits), &data.y)?;
    let rmse = concept_rmse(&pred.concepts, &data.c)?;
    let k = model.k();

    let ctl: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i| ctl_metric(&pred.concepts.column(i), &data.c.column(i), &data.y, &config.kde))
        .collect::<Result<_>>()?;

    let hat_cols: Vec<Vec<f64>> = (0..k).map(|i| pred.concepts.column(i)).collect();
    let true_cols: Vec<Vec<f64>> = (0..k).map(|i| data.c.column(i)).collect();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let pair_values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| icl_metric(&hat_cols[i], &hat_cols[j], &true_cols[i], &true_cols[j], &config.binned))
        .collect::<Result<_>>()?;
    let mut icl = vec![vec![0.0; k]; k];
    for (&(i, j), &v) in pairs.iter().zip(&pair_values) {
        icl[i][j] = v;
        icl[j][i] = v;
    }

    let mean_ctl = ctl.iter().sum::<f64>() / k as f64;
    let mean_icl = if pair_values.is_empty() {
        0.0
    } else {
        pair_values.iter().sum::<f64>() / pair_values.len() as f64
    };
    Ok(FaithfulnessReport {
        version: REPORT_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        split,
        n_samples: data.len(),
        accuracy_pct: 100.0 * acc,
        concept_names: model.concept_names.clone(),
        rmse: rmse.per_concept,
        c_rmse: rmse.aggregate,
        ctl,
        mean_ctl,
        icl,
        mean_icl,
        aggregate_leakage: (mean_ctl + mean_icl) / 2.0,
        config_fingerprint: model.config_fingerprint.clone(),
        seed: model.seed,
    })
}

/// Canonical serialisation shared by the CLI and the HTTP service.
pub fn report_json(report: &FaithfulnessReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}
