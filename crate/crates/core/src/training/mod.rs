//! Training regimes and the rescaled total objective.

mod ablation;
mod batching;
mod objective;
mod probe;
mod trainer;

pub use ablation::{ablation_matrix, AblationCell, AblationRun};
pub use batching::{batch_plan, stratified_order};
pub use objective::{total_loss, InputSource, ModelGrads, Objective, RunningMeans, StepOutput, StepRecord};
pub use probe::linear_probe_accuracy;
pub use trainer::{train, EpochRecord, FrozenCheck, TrainLog};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::KdeConfig;
use crate::model::{HeadKind, KanGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Joint,
    Independent,
    Sequential,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Regime::Joint),
            "independent" => Ok(Regime::Independent),
            "sequential" => Ok(Regime::Sequential),
            other => Err(Error::Argument(format!("unknown regime {other:?}"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Joint => "joint",
            Regime::Independent => "independent",
            Regime::Sequential => "sequential",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    pub head: HeadKind,
    pub use_leakage_loss: bool,
    pub lambda: f64,
    pub lambda_leak: f64,
    /// Epoch budget per phase.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    /// Decay of the exponential running means.
    pub rho: f64,
    /// Epochs strictly worse than the best before stopping; `None` disables.
    pub patience: Option<usize>,
    pub seed: u64,
    pub kde: KdeConfig,
    pub kan_grid: KanGrid,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Joint,
            head: HeadKind::Kan,
            use_leakage_loss: true,
            lambda: 1.0,
            lambda_leak: 1.0,
            epochs: 60,
            batch_size: 128,
            lr_init: 1e-2,
            rho: 0.99,
            patience: Some(10),
            seed: 42,
            kde: KdeConfig::default(),
            kan_grid: KanGrid::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(format!("train config: {m}")));
        for (name, v) in [("lambda", self.lambda), ("lambda_leak", self.lambda_leak)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return bad(format!("lr_init must be > 0, got {}", self.lr_init));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0,1), got {}", self.rho));
        }
        self.kde.validate()?;
        self.kan_grid.validate()?;
        Ok(())
    }

    /// Checks that depend on the dataset: the leakage batch precondition.
    pub fn validate_for(&self, n_classes: usize) -> Result<()> {
        self.validate()?;
        if self.use_leakage_loss && self.batch_size < 2 * n_classes {
            return Err(Error::Argument(format!(
                "train config: batch_size {} < 2 × {n_classes} classes with the leakage loss",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Hash of every field except the seed, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seed");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}
