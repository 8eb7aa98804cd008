use serde::{Deserialize, Serialize};

use super::{FaithfulnessReport, EXPORT_VERSION};
use crate::data::SplitData;
use crate::model::{argmax_rows, CbmModel};
use crate::{Error, Result};

const HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Plot-ready document: each series is a list of `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotDoc {
    pub version: u32,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Histograms of one predicted concept, split by predicted class. All
/// classes share the same bins, spanning the observed range; `x` holds bin
/// centres and `y` counts.
pub fn activation_distributions(model: &CbmModel, data: &SplitData, concept: usize) -> Result<PlotDoc> {
    if data.is_empty() {
        return Err(Error::Argument("activation distributions of an empty split".into()));
    }
    if concept >= model.k() {
        return Err(Error::Argument(format!("concept index {concept} out of range (k = {})", model.k())));
    }
    let pred = model.forward(&data.z)?;
    let values = pred.concepts.column(concept);
    let classes = argmax_rows(&pred.logits);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let centres: Vec<f64> = (0..HISTOGRAM_BINS).map(|b| lo + (b as f64 + 0.5) * width).collect();

    let mut counts = vec![vec![0.0; HISTOGRAM_BINS]; model.n_labels()];
    for (&v, &c) in values.iter().zip(&classes) {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[c][b] += 1.0;
    }
    let series = counts
        .into_iter()
        .enumerate()
        .filter(|(_, h)| h.iter().any(|&n| n > 0.0))
        .map(|(c, y)| Series {
            label: model.label_names[c].clone(),
            x: centres.clone(),
            y,
        })
        .collect();
    Ok(PlotDoc {
        version: EXPORT_VERSION,
        title: format!("activation of {} by predicted class", model.concept_names[concept]),
        x_label: "predicted concept score".into(),
        y_label: "count".into(),
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub aggregate_leakage: f64,
    pub c_rmse: f64,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoDoc {
    pub version: u32,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<ParetoPoint>,
}

/// Leakage against concept error, both minimised. A point is dominated when
/// another is no worse on both axes and strictly better on one.
pub fn pareto_export(reports: &[(String, FaithfulnessReport)]) -> Result<ParetoDoc> {
    if reports.is_empty() {
        return Err(Error::Argument("pareto export needs at least one report".into()));
    }
    let xy: Vec<(f64, f64)> = reports.iter().map(|(_, r)| (r.aggregate_leakage, r.c_rmse)).collect();
    let points = reports
        .iter()
        .zip(&xy)
        .map(|((label, _), &(x, y))| ParetoPoint {
            label: label.clone(),
            aggregate_leakage: x,
            c_rmse: y,
            dominated: xy.iter().any(|&(ox, oy)| ox <= x && oy <= y && (ox < x || oy < y)),
        })
        .collect();
    Ok(ParetoDoc {
        version: EXPORT_VERSION,
        x_label: "aggregate leakage".into(),
        y_label: "c-RMSE".into(),
        points,
    })
}
