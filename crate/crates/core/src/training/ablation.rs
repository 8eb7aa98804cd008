use rayon::prelude::*;
use serde::Serialize;

use super::{train, TrainConfig};
use crate::data::{Dataset, Split};
use crate::evaluation::{evaluate, EvalConfig, FaithfulnessReport};
use crate::model::{CbmModel, HeadKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AblationCell {
    pub head: HeadKind,
    pub use_leakage_loss: bool,
}

impl AblationCell {
    pub const ALL: [AblationCell; 4] = [
        AblationCell { head: HeadKind::Linear, use_leakage_loss: false },
        AblationCell { head: HeadKind::Linear, use_leakage_loss: true },
        AblationCell { head: HeadKind::Kan, use_leakage_loss: false },
        AblationCell { head: HeadKind::Kan, use_leakage_loss: true },
    ];

    pub fn label(&self) -> String {
        format!("{}{}", self.head, if self.use_leakage_loss { "+leak" } else { "" })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRun {
    pub cell: AblationCell,
    pub label: String,
    pub repeat: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub config: TrainConfig,
    pub report: FaithfulnessReport,
    #[serde(skip)]
    pub model: CbmModel,
}

/// Trains every head × leakage-loss cell `repeats` times and evaluates each
/// run on the test split. Repeat `r` uses seed `base.seed + r` in every cell,
/// so cells are compared on the same seeds. Runs are independent and execute
/// in parallel; the output order is cell-major, then repeat.
pub fn ablation_matrix(
    dataset: &Dataset,
    base: &TrainConfig,
    repeats: usize,
    eval: &EvalConfig,
) -> Result<Vec<AblationRun>> {
    if repeats == 0 {
        return Err(Error::Argument("ablation needs at least one repeat".into()));
    }
    let jobs: Vec<(AblationCell, usize)> = AblationCell::ALL
        .iter()
        .flat_map(|&c| (0..repeats).map(move |r| (c, r)))
        .collect();
    for (cell, _) in &jobs {
        cell_config(base, *cell, 0).validate_for(dataset.n_labels())?;
    }
    jobs.into_par_iter()
        .map(|(cell, repeat)| {
            let config = cell_config(base, cell, repeat);
            let (model, _) = train(dataset, &config)?;
            let report = evaluate(&model, dataset, Split::Test, eval)?;
            Ok(AblationRun {
                cell,
                label: cell.label(),
                repeat,
                seed: config.seed,
                fingerprint: config.fingerprint(),
                config,
                report,
                model,
            })
        })
        .collect()
}

fn cell_config(base: &TrainConfig, cell: AblationCell, repeat: usize) -> TrainConfig {
    TrainConfig {
        head: cell.head,
        use_leakage_loss: cell.use_leakage_loss,
        seed: base.seed.wrapping_add(repeat as u64),
        ..base.clone()
    }
}
