use serde::{Deserialize, Serialize};

use super::{accuracy, PlotDoc, Series, EXPORT_VERSION};
use crate::data::{Dataset, Split};
use crate::model::{argmax_rows, CbmModel};
use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionCurve {
    pub version: u32,
    /// Concept indices by descending single-concept validation gain.
    pub order: Vec<usize>,
    pub validation_gain: Vec<f64>,
    /// Test accuracy after replacing the first `j` concepts of `order`.
    pub accuracy: Vec<f64>,
}

impl InterventionCurve {
    pub fn plot(&self, concept_names: &[String]) -> PlotDoc {
        PlotDoc {
            version: EXPORT_VERSION,
            title: format!(
                "intervention order: {}",
                self.order.iter().map(|&i| concept_names[i].as_str()).collect::<Vec<_>>().join(", ")
            ),
            x_label: "concepts intervened".into(),
            y_label: "test accuracy".into(),
            series: vec![Series {
                label: "accuracy".into(),
                x: (0..self.accuracy.len()).map(|j| j as f64).collect(),
                y: self.accuracy.clone(),
            }],
        }
    }
}

fn head_accuracy(model: &CbmModel, concepts: &Matrix, y: &[usize]) -> Result<f64> {
    accuracy(&argmax_rows(&model.head.forward(concepts)?), y)
}

fn replace_columns(c_hat: &mut Matrix, truth: &Matrix, cols: &[usize]) {
    for &j in cols {
        c_hat.set_column(j, &truth.column(j));
    }
}

/// Ranks concepts by the validation accuracy gained from correcting each
/// one alone (ties by index), then corrects them cumulatively on the test split.
pub fn intervene(model: &CbmModel, dataset: &Dataset) -> Result<InterventionCurve> {
    let val = dataset.split(Split::Val);
    let test = dataset.split(Split::Test);
    if val.is_empty() || test.is_empty() {
        return Err(Error::Argument("intervention needs ground-truth concepts on val and test splits".into()));
    }
    let k = model.k();
    let val_hat = model.bottleneck.forward(&val.z)?;
    let base = head_accuracy(model, &val_hat, &val.y)?;
    let mut gains = Vec::with_capacity(k);
    for j in 0..k {
        let mut c = val_hat.clone();
        replace_columns(&mut c, &val.c, &[j]);
        gains.push(head_accuracy(model, &c, &val.y)? - base);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));

    let mut current = model.bottleneck.forward(&test.z)?;
    let mut acc = vec![head_accuracy(model, &current, &test.y)?];
    for &j in &order {
        replace_columns(&mut current, &test.c, &[j]);
        acc.push(head_accuracy(model, &current, &test.y)?);
    }
    Ok(InterventionCurve {
        version: EXPORT_VERSION,
        validation_gain: order.iter().map(|&j| gains[j]).collect(),
        order,
        accuracy: acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Preset, SyntheticSpec};
    use crate::model::{HeadKind, KanGrid};
    use crate::numerics::Rng;

    #[test]
    fn endpoints_match_baseline_and_full_substitution() {
        let mut s = SyntheticSpec::preset(Preset::Default, 3);
        s.n_train = 10;
        s.n_val = 50;
        s.n_test = 50;
        let ds = generate_synthetic(&s).unwrap();
        for head in [HeadKind::Kan, HeadKind::Linear] {
            let m = CbmModel::init(
                ds.z_width(),
                ds.concept_names.clone(),
                ds.label_names.clone(),
                head,
                KanGrid::default(),
                &mut Rng::new(5),
            )
            .unwrap();
            let curve = intervene(&m, &ds).unwrap();
            let test = ds.split(Split::Test);
            assert_eq!(curve.accuracy.len(), ds.k() + 1);
            assert_eq!(curve.accuracy[0], accuracy(&argmax_rows(&m.forward(&test.z).unwrap().logits), &test.y).unwrap());
            assert_eq!(*curve.accuracy.last().unwrap(), head_accuracy(&m, &test.c, &test.y).unwrap());
            let mut sorted = curve.order.clone();
            sorted.sort();
            assert_eq!(sorted, (0..ds.k()).collect::<Vec<_>>());
            assert!(curve.validation_gain.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
