use serde::{Deserialize, Serialize};

use crate::data::SplitData;
use crate::density::{leakage_loss_batch, LeakageOutcome};
use crate::model::CbmModel;
use crate::numerics::{cosine_anneal, Matrix};
use crate::{Error, Result};

use super::TrainConfig;

const MEAN_FLOOR: f64 = 1e-12;

/// What feeds the head during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    PredictedConcepts,
    TrueConcepts,
}

/// Which loss terms are active and which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Objective {
    pub cls: bool,
    pub concept: bool,
    pub leak: bool,
    pub head_input: InputSource,
    pub train_bottleneck: bool,
    pub train_head: bool,
}

impl Objective {
    pub fn joint(leak: bool) -> Self {
        Objective {
            cls: true,
            concept: true,
            leak,
            head_input: InputSource::PredictedConcepts,
            train_bottleneck: true,
            train_head: true,
        }
    }

    /// Bottleneck-only phase: concept loss plus the optional leakage term.
    pub fn concepts_only(leak: bool) -> Self {
        Objective {
            cls: false,
            concept: true,
            leak,
            head_input: InputSource::PredictedConcepts,
            train_bottleneck: true,
            train_head: false,
        }
    }

    /// Head-only phase fed by `source`; the bottleneck is left untouched.
    pub fn head_only(source: InputSource) -> Self {
        Objective {
            cls: true,
            concept: false,
            leak: false,
            head_input: source,
            train_bottleneck: false,
            train_head: true,
        }
    }
}

/// Exponential running means of the raw loss terms, set on first observation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMeans {
    pub cls: Option<f64>,
    pub concept: Option<f64>,
    pub leak: Option<f64>,
}

fn ema(slot: &mut Option<f64>, value: f64, rho: f64) {
    *slot = Some(match *slot {
        Some(m) => rho * m + (1.0 - rho) * value,
        None => value,
    });
}

/// One optimizer step's log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: String,
    pub epoch: usize,
    pub step: usize,
    pub input_source: InputSource,
    pub l_cls: Option<f64>,
    pub l_c: Option<f64>,
    pub l_leak: Option<f64>,
    pub leak_skipped: bool,
    pub lambda_c: Option<f64>,
    pub lambda_leak: Option<f64>,
    pub alpha: f64,
    pub lr: f64,
    pub means_before: RunningMeans,
}

/// Flat parameter gradients for the trainable parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub bottleneck: Option<Vec<f64>>,
    pub head: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: ModelGrads,
    pub means: RunningMeans,
    pub record: StepRecord,
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub(super) fn cross_entropy(logits: &Matrix, y: &[usize]) -> (f64, Matrix) {
    let b = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        for (g, v) in grad.row_mut(r).iter_mut().zip(row) {
            *g = (v - lse).exp() / b;
        }
        grad[(r, label)] -= 1.0 / b;
    }
    (loss / b, grad)
}

/// Rescaled objective on one batch.
///
/// Term weights come from the running means as they stood before this step
/// (a mean seen for the first time is initialised from this step's value),
/// and are constants for differentiation. The leakage weight is multiplied by
/// the annealed activation for `step` out of `total_steps`.
pub fn total_loss(
    model: &CbmModel,
    batch: &SplitData,
    config: &TrainConfig,
    objective: Objective,
    means: &RunningMeans,
    step: usize,
    total_steps: usize,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if batch.z.cols() != model.input_width() || batch.c.cols() != model.k() {
        return Err(Error::Shape(format!(
            "batch widths z {} / c {} vs model {} / {}",
            batch.z.cols(),
            batch.c.cols(),
            model.input_width(),
            model.k()
        )));
    }
    let span = total_steps.saturating_sub(1).max(1);
    let alpha = cosine_anneal(step.min(span), span, 0.0, 1.0)?;

    let c_hat = model.bottleneck.forward(&batch.z)?;
    let head_in = match objective.head_input {
        InputSource::PredictedConcepts => &c_hat,
        InputSource::TrueConcepts => &batch.c,
    };

    let cls = if objective.cls {
        let logits = model.head.forward(head_in)?;
        Some(cross_entropy(&logits, &batch.y))
    } else {
        None
    };
    let concept = if objective.concept {
        let n = (c_hat.rows() * c_hat.cols()) as f64;
        let mut grad = Matrix::zeros(c_hat.rows(), c_hat.cols());
        let mut loss = 0.0;
        for ((g, p), t) in grad.as_mut_slice().iter_mut().zip(c_hat.as_slice()).zip(batch.c.as_slice()) {
            let d = p - t;
            loss += d * d;
            *g = 2.0 * d / n;
        }
        Some((loss / n, grad))
    } else {
        None
    };
    let leak = if objective.leak {
        Some(leakage_loss_batch(&c_hat, &batch.c, &batch.y, &config.kde)?)
    } else {
        None
    };

    let mut before = means.clone();
    if let Some((l, _)) = &cls {
        before.cls.get_or_insert(*l);
    }
    if let Some((l, _)) = &concept {
        before.concept.get_or_insert(*l);
    }
    if let Some(LeakageOutcome::Computed { loss, .. }) = &leak {
        before.leak.get_or_insert(*loss);
    }

    // The classification mean anchors the scale; without a classification
    // term the concept loss plays that role at unit weight.
    let reference = if objective.cls { before.cls } else { before.concept };
    let lambda_c = concept.as_ref().map(|_| {
        if objective.cls {
            config.lambda / before.concept.expect("set").max(MEAN_FLOOR) * reference.expect("set")
        } else {
            1.0
        }
    });
    let lambda_leak = match (&leak, before.leak, reference) {
        (Some(LeakageOutcome::Computed { .. }), Some(m), Some(r)) => {
            Some(config.lambda_leak / m.max(MEAN_FLOOR) * r)
        }
        _ => None,
    };

    let mut loss = 0.0;
    let mut d_chat = Matrix::zeros(c_hat.rows(), c_hat.cols());
    let mut head_grad = None;
    if let Some((l, d_logits)) = &cls {
        loss += l;
        let hg = model.head.backward(head_in, d_logits)?;
        if objective.head_input == InputSource::PredictedConcepts {
            add_scaled(&mut d_chat, hg.input(), 1.0);
        }
        head_grad = Some(hg.flat_params());
    }
    if let (Some((l, g)), Some(w)) = (&concept, lambda_c) {
        loss += w * l;
        add_scaled(&mut d_chat, g, w);
    }
    let (l_leak, leak_skipped) = match &leak {
        Some(LeakageOutcome::Computed { loss: l, grad }) => {
            let w = lambda_leak.expect("computed leak has a weight") * alpha;
            loss += w * l;
            add_scaled(&mut d_chat, grad, w);
            (Some(*l), false)
        }
        Some(LeakageOutcome::Skipped { .. }) => (None, true),
        None => (None, false),
    };

    let bottleneck_grad = if objective.train_bottleneck {
        Some(model.bottleneck.backward(&batch.z, &d_chat)?.flat_params())
    } else {
        None
    };
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite total loss at step {step}")));
    }

    let mut updated = means.clone();
    if let Some((l, _)) = &cls {
        ema(&mut updated.cls, *l, config.rho);
    }
    if let Some((l, _)) = &concept {
        ema(&mut updated.concept, *l, config.rho);
    }
    if let Some(l) = l_leak {
        ema(&mut updated.leak, l, config.rho);
    }

    Ok(StepOutput {
        loss,
        grads: ModelGrads {
            bottleneck: bottleneck_grad,
            head: if objective.train_head { head_grad } else { None },
        },
        means: updated,
        record: StepRecord {
            phase: String::new(),
            epoch: 0,
            step,
            input_source: objective.head_input,
            l_cls: cls.map(|(l, _)| l),
            l_c: concept.map(|(l, _)| l),
            l_leak,
            leak_skipped,
            lambda_c,
            lambda_leak,
            alpha,
            lr: 0.0,
            means_before: before,
        },
    })
}

fn add_scaled(acc: &mut Matrix, g: &Matrix, w: f64) {
    for (a, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *a += w * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HeadKind, KanGrid};
    use crate::numerics::{finite_diff_grad, relative_error, Rng};

    fn tiny(head: HeadKind, seed: u64) -> (CbmModel, SplitData) {
        let mut rng = Rng::new(seed);
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let model = CbmModel::init(6, names("c", 3), names("y", 2), head, KanGrid::default(), &mut rng).unwrap();
        let y: Vec<usize> = (0..24).map(|i| i % 2).collect();
        let c: Vec<f64> = (0..72).map(|_| rng.uniform()).collect();
        let z: Vec<f64> = (0..144).map(|i| rng.normal(0.0, 1.0) + 0.5 * y[i / 6] as f64).collect();
        let batch = SplitData {
            ids: names("s", 24),
            z: Matrix::from_vec(24, 6, z).unwrap(),
            c: Matrix::from_vec(24, 3, c).unwrap(),
            y,
        };
        (model, batch)
    }

    fn with_params(model: &CbmModel, p: &[f64]) -> CbmModel {
        let mut m = model.clone();
        let nb = m.bottleneck.params().len();
        m.bottleneck.set_params(&p[..nb]).unwrap();
        m.head.set_params(&p[nb..]).unwrap();
        m
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let config = TrainConfig::default();
        let means = RunningMeans { cls: Some(0.7), concept: Some(0.2), leak: Some(0.01) };
        for head in [HeadKind::Linear, HeadKind::Kan] {
            for seed in 0..10 {
                let (model, batch) = tiny(head, seed);
                let out = total_loss(&model, &batch, &config, Objective::joint(true), &means, 5, 11).unwrap();
                assert!(out.record.alpha > 0.0 && out.record.l_leak.is_some());
                let mut analytic = out.grads.bottleneck.unwrap();
                analytic.extend(out.grads.head.unwrap());
                let p0: Vec<f64> = model.bottleneck.params().into_iter().chain(model.head.params()).collect();
                let numeric = finite_diff_grad(
                    |p| {
                        total_loss(&with_params(&model, p), &batch, &config, Objective::joint(true), &means, 5, 11)
                            .unwrap()
                            .loss
                    },
                    &p0,
                    1e-5,
                )
                .unwrap();
                let err = relative_error(&analytic, &numeric, 1e-8);
                assert!(err < 1e-3, "{head} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn rescaling_identity() {
        let (model, batch) = tiny(HeadKind::Linear, 1);
        let config = TrainConfig::default();
        let means = RunningMeans { cls: Some(2.0), concept: Some(0.5), leak: Some(0.25) };
        let out = total_loss(&model, &batch, &config, Objective::joint(true), &means, 3, 10).unwrap();
        assert_eq!(out.record.lambda_c, Some(4.0));
        assert_eq!(out.record.lambda_c.unwrap() * 0.5, 2.0);
        assert_eq!(out.record.lambda_leak, Some(8.0));
    }

    #[test]
    fn first_step_has_no_leakage_contribution() {
        let (model, batch) = tiny(HeadKind::Kan, 2);
        let config = TrainConfig::default();
        let with = total_loss(&model, &batch, &config, Objective::joint(true), &RunningMeans::default(), 0, 10).unwrap();
        let without =
            total_loss(&model, &batch, &config, Objective::joint(false), &RunningMeans::default(), 0, 10).unwrap();
        assert_eq!(with.record.alpha, 0.0);
        assert_eq!(with.loss, without.loss);
        assert_eq!(with.grads, without.grads);
        assert!(with.record.l_leak.is_some());
    }

    #[test]
    fn zero_weights_reduce_to_cross_entropy() {
        let (model, batch) = tiny(HeadKind::Linear, 4);
        let config = TrainConfig { lambda: 0.0, lambda_leak: 0.0, ..Default::default() };
        let means = RunningMeans { cls: Some(1.0), concept: Some(1.0), leak: Some(1.0) };
        let out = total_loss(&model, &batch, &config, Objective::joint(true), &means, 9, 10).unwrap();
        assert_eq!(out.loss, out.record.l_cls.unwrap());
    }

    #[test]
    fn means_update_after_weights() {
        let (model, batch) = tiny(HeadKind::Linear, 5);
        let config = TrainConfig::default();
        let means = RunningMeans { cls: Some(1.0), concept: Some(1.0), leak: None };
        let out = total_loss(&model, &batch, &config, Objective::joint(false), &means, 1, 10).unwrap();
        assert_eq!(out.record.means_before.cls, Some(1.0));
        let l = out.record.l_cls.unwrap();
        assert!((out.means.cls.unwrap() - (0.99 + 0.01 * l)).abs() < 1e-15);
        assert_eq!(out.means.leak, None);
    }

    #[test]
    fn skipped_leakage_is_logged_and_inert() {
        let (model, mut batch) = tiny(HeadKind::Linear, 6);
        batch.y = vec![0; 24];
        batch.y[0] = 1;
        let means = RunningMeans { cls: Some(1.0), concept: Some(1.0), leak: Some(1.0) };
        let out = total_loss(&model, &batch, &TrainConfig::default(), Objective::joint(true), &means, 5, 10).unwrap();
        assert!(out.record.leak_skipped && out.record.l_leak.is_none());
        assert_eq!(out.means.leak, Some(1.0));
    }
}
