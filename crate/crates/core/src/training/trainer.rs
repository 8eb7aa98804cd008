use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Split, SplitData};
use crate::evaluation::{accuracy, concept_rmse};
use crate::model::{argmax_rows, CbmModel};
use crate::numerics::{adam_update, cosine_anneal, AdamConfig, AdamState, Rng};
use crate::{Error, Result};

use super::batching::{batch_plan, stratified_order};
use super::objective::{cross_entropy, total_loss, InputSource, Objective, RunningMeans, StepRecord};
use super::{Regime, TrainConfig};

/// Validation metrics after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    /// Cross-entropy over the full training split, when the phase trains the head.
    pub train_l_cls: Option<f64>,
    pub val_accuracy: f64,
    pub val_c_rmse: f64,
}

/// Bottleneck parameter hashes around a phase that must not touch it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenCheck {
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub fingerprint: String,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// `(phase, epoch)` whose parameters were kept.
    pub selected: Vec<(String, usize)>,
    pub frozen_bottleneck: Option<FrozenCheck>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line<'a> {
    Step(&'a StepRecord),
    Epoch(&'a EpochRecord),
    Summary {
        tool_version: &'static str,
        fingerprint: &'a str,
        config: &'a TrainConfig,
        selected: &'a [(String, usize)],
        frozen_bottleneck: &'a Option<FrozenCheck>,
    },
}

impl TrainLog {
    /// One JSON object per line: steps, then epochs, then a summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = self
            .steps
            .iter()
            .map(Line::Step)
            .chain(self.epochs.iter().map(Line::Epoch))
            .chain(std::iter::once(Line::Summary {
                tool_version: crate::TOOL_VERSION,
                fingerprint: &self.fingerprint,
                config: &self.config,
                selected: &self.selected,
                frozen_bottleneck: &self.frozen_bottleneck,
            }));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("log serialises"));
            out.push('\n');
        }
        out
    }
}

fn bottleneck_hash(model: &CbmModel) -> String {
    let mut h = Sha256::new();
    for p in model.bottleneck.params() {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Copy, PartialEq)]
enum Select {
    Accuracy,
    ConceptRmse,
}

struct Phase<'a> {
    name: &'static str,
    objective: Objective,
    select: Select,
    train: &'a SplitData,
    val: &'a SplitData,
}

/// Trains `config.regime` and returns the selected model with its log.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(CbmModel, TrainLog)> {
    dataset.validate()?;
    config.validate_for(dataset.n_labels())?;
    let train = dataset.split(Split::Train);
    let val = dataset.split(Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Argument(format!(
            "training needs nonempty train and val splits (got {} / {})",
            train.len(),
            val.len()
        )));
    }

    let root = Rng::new(config.seed);
    let mut model = CbmModel::init(
        dataset.z_width(),
        dataset.concept_names.clone(),
        dataset.label_names.clone(),
        config.head,
        config.kan_grid,
        &mut root.fork(1),
    )?;
    model.seed = config.seed;
    model.config_fingerprint = config.fingerprint();
    let mut batch_rng = root.fork(2);
    let mut log = TrainLog {
        config: config.clone(),
        fingerprint: config.fingerprint(),
        steps: Vec::new(),
        epochs: Vec::new(),
        selected: Vec::new(),
        frozen_bottleneck: None,
    };

    let leak = config.use_leakage_loss;
    let phase = |name, objective, select| Phase {
        name,
        objective,
        select,
        train: &train,
        val: &val,
    };
    match config.regime {
        Regime::Joint => {
            run_phase(&mut model, phase("joint", Objective::joint(leak), Select::Accuracy), config, &mut batch_rng, &mut log)?;
        }
        Regime::Independent | Regime::Sequential => {
            let first = phase("concepts", Objective::concepts_only(leak), Select::ConceptRmse);
            run_phase(&mut model, first, config, &mut batch_rng, &mut log)?;
            let source = if config.regime == Regime::Independent {
                InputSource::TrueConcepts
            } else {
                InputSource::PredictedConcepts
            };
            let before = bottleneck_hash(&model);
            let second = phase("head", Objective::head_only(source), Select::Accuracy);
            run_phase(&mut model, second, config, &mut batch_rng, &mut log)?;
            log.frozen_bottleneck = Some(FrozenCheck {
                before,
                after: bottleneck_hash(&model),
            });
        }
    }
    Ok((model, log))
}

fn run_phase(
    model: &mut CbmModel,
    phase: Phase<'_>,
    config: &TrainConfig,
    rng: &mut Rng,
    log: &mut TrainLog,
) -> Result<()> {
    let n = phase.train.len();
    let plan = batch_plan(n, config.batch_size);
    let total_steps = config.epochs * plan.len();
    let obj = phase.objective;

    let mut means = RunningMeans::default();
    let mut adam_b = AdamState::new(model.bottleneck.params().len(), AdamConfig::default());
    let mut adam_h = AdamState::new(model.head.params().len(), AdamConfig::default());
    let mut step = 0;
    let mut best: Option<(f64, usize, CbmModel)> = None;
    let mut worse = 0;

    for epoch in 0..config.epochs {
        let order = if obj.leak {
            stratified_order(&phase.train.y, rng)
        } else {
            let mut o: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut o);
            o
        };
        for range in &plan {
            let batch = phase.train.select(&order[range.clone()]);
            let out = total_loss(model, &batch, config, obj, &means, step, total_steps)?;
            let lr = cosine_anneal(step, total_steps, config.lr_init, 0.0)?;
            if let Some(g) = &out.grads.bottleneck {
                let mut p = model.bottleneck.params();
                adam_update(&mut p, g, &mut adam_b, lr)?;
                model.bottleneck.set_params(&p)?;
            }
            if let Some(g) = &out.grads.head {
                let mut p = model.head.params();
                adam_update(&mut p, g, &mut adam_h, lr)?;
                model.head.set_params(&p)?;
            }
            means = out.means;
            let mut record = out.record;
            record.phase = phase.name.to_string();
            record.epoch = epoch;
            record.lr = lr;
            log.steps.push(record);
            step += 1;
        }

        let pred = model.forward(&phase.val.z)?;
        let val_accuracy = accuracy(&argmax_rows(&pred.logits), &phase.val.y)?;
        let val_c_rmse = concept_rmse(&pred.concepts, &phase.val.c)?.aggregate;
        let train_l_cls = if obj.cls {
            let input = match obj.head_input {
                InputSource::PredictedConcepts => model.bottleneck.forward(&phase.train.z)?,
                InputSource::TrueConcepts => phase.train.c.clone(),
            };
            Some(cross_entropy(&model.head.forward(&input)?, &phase.train.y).0)
        } else {
            None
        };
        log.epochs.push(EpochRecord {
            phase: phase.name.to_string(),
            epoch,
            train_l_cls,
            val_accuracy,
            val_c_rmse,
        });

        // Ties keep the later epoch; only strictly worse epochs use up patience.
        let score = match phase.select {
            Select::Accuracy => val_accuracy,
            Select::ConceptRmse => -val_c_rmse,
        };
        match &best {
            Some((b, _, _)) if score < *b => worse += 1,
            _ => {
                best = Some((score, epoch, model.clone()));
                worse = 0;
            }
        }
        if config.patience.is_some_and(|p| worse >= p) {
            break;
        }
    }
    let (_, epoch, kept) = best.expect("at least one epoch");
    *model = kept;
    log.selected.push((phase.name.to_string(), epoch));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Preset, SyntheticSpec};
    use crate::model::HeadKind;

    fn small(preset: Preset) -> Dataset {
        let mut s = SyntheticSpec::preset(preset, 1);
        s.n_train = 240;
        s.n_val = 60;
        s.n_test = 60;
        generate_synthetic(&s).unwrap()
    }

    fn quick(regime: Regime, head: HeadKind, leak: bool) -> TrainConfig {
        TrainConfig {
            regime,
            head,
            use_leakage_loss: leak,
            epochs: 4,
            batch_size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_model_and_log() {
        let ds = small(Preset::Default);
        let cfg = quick(Regime::Joint, HeadKind::Kan, true);
        let (m1, l1) = train(&ds, &cfg).unwrap();
        let (m2, l2) = train(&ds, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(l1.to_jsonl(), l2.to_jsonl());
    }

    #[test]
    fn schedules_and_rescaling_hold_at_every_step() {
        let ds = small(Preset::Default);
        let cfg = quick(Regime::Joint, HeadKind::Linear, true);
        let (_, log) = train(&ds, &cfg).unwrap();
        let steps = &log.steps;
        assert_eq!(steps.len(), 4 * 4);
        assert_eq!(steps[0].alpha, 0.0);
        assert_eq!(steps.last().unwrap().alpha, 1.0);
        for w in steps.windows(2) {
            assert!(w[1].alpha >= w[0].alpha);
            assert!(w[1].lr <= w[0].lr);
        }
        for s in steps {
            let m = &s.means_before;
            let lc = s.lambda_c.unwrap();
            assert!((lc * m.concept.unwrap() - cfg.lambda * m.cls.unwrap()).abs() < 1e-12);
            if let (Some(ll), Some(ml)) = (s.lambda_leak, m.leak) {
                assert!((ll * ml - cfg.lambda_leak * m.cls.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn independent_head_sees_true_concepts_only() {
        let ds = small(Preset::Noiseless);
        let cfg = TrainConfig { epochs: 60, ..quick(Regime::Independent, HeadKind::Linear, false) };
        let (model, log) = train(&ds, &cfg).unwrap();
        let head_steps: Vec<_> = log.steps.iter().filter(|s| s.phase == "head").collect();
        assert!(!head_steps.is_empty());
        assert!(head_steps.iter().all(|s| s.input_source == InputSource::TrueConcepts));
        assert!(log.steps.iter().filter(|s| s.phase == "concepts").all(|s| s.l_cls.is_none()));
        let test = ds.split(Split::Test);
        let pred = argmax_rows(&model.head.forward(&test.c).unwrap());
        assert_eq!(accuracy(&pred, &test.y).unwrap(), 1.0);
    }

    #[test]
    fn sequential_phase_two_leaves_bottleneck_untouched() {
        let ds = small(Preset::Default);
        let (_, log) = train(&ds, &quick(Regime::Sequential, HeadKind::Kan, true)).unwrap();
        let f = log.frozen_bottleneck.unwrap();
        assert_eq!(f.before, f.after);
        assert!(log
            .steps
            .iter()
            .filter(|s| s.phase == "head")
            .all(|s| s.input_source == InputSource::PredictedConcepts));
    }

    #[test]
    fn mismatched_config_rejected_before_training() {
        let ds = small(Preset::Default);
        let cfg = TrainConfig { batch_size: 4, ..quick(Regime::Joint, HeadKind::Kan, true) };
        assert!(matches!(train(&ds, &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn jsonl_has_one_line_per_record() {
        let ds = small(Preset::Default);
        let (_, log) = train(&ds, &quick(Regime::Joint, HeadKind::Linear, false)).unwrap();
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), log.steps.len() + log.epochs.len() + 1);
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
}
