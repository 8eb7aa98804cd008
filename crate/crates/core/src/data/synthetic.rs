//! Synthetic multimodal benchmark with a planted label shortcut.
//!
//! Concepts are drawn per class, embedded linearly into `z`, and the first
//! `shortcut_dims` embedding coordinates additionally carry a scaled one-hot
//! copy of the label. Those coordinates bypass the concepts, so a model that
//! routes them through its bottleneck leaks task information.

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Split};
use crate::numerics::Rng;
use crate::{Error, Result};

/// How labels relate to concepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// `y` uniform, `c = M_c[y] + noise`.
    ConceptMeans,
    /// `c0 ~ U(0,1)^k`, `y = argmax_o bias_o + Σ_i w_oi·tanh(κ(c0_i − θ_i))`,
    /// `c = c0 + noise`.
    Saturating {
        kappa: f64,
        theta: Vec<f64>,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Default,
    /// Default sizes with a saturating concept-to-class rule.
    Nonlinear,
    /// No noise and no shortcut.
    Noiseless,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Preset::Default),
            "nonlinear" => Ok(Preset::Nonlinear),
            "noiseless" => Ok(Preset::Noiseless),
            other => Err(Error::Argument(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub k: usize,
    /// Per-modality width; `z` has width `2d`.
    pub d: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// `n_classes × k`, entries in [0,1]. Unused by the saturating rule.
    pub concept_means: Vec<Vec<f64>>,
    pub sigma_c: f64,
    /// `2d × k`.
    pub embedding_map: Vec<Vec<f64>>,
    pub sigma_z: f64,
    pub shortcut_dims: usize,
    pub shortcut_strength: f64,
    pub label_rule: LabelRule,
    pub seed: u64,
}

const MEANS_LO: f64 = 0.25;
const MEANS_HI: f64 = 0.75;

impl SyntheticSpec {
    /// 4 classes, k=12, d=16, 2000/500/500, σ_c=0.1, σ_z=0.05 and a 4-dim
    /// shortcut of strength 5, with matrices drawn from `seed`.
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let (n_classes, k, d) = (4usize, 12usize, 16usize);
        let mut rng = Rng::new(seed).fork(0x5e7);
        let concept_means = (0..n_classes)
            .map(|_| (0..k).map(|_| rng.uniform_range(MEANS_LO, MEANS_HI)).collect())
            .collect();
        let shortcut_dims = if preset == Preset::Noiseless { 0 } else { 4 };
        let scale = 1.0;
        let embedding_map = (0..2 * d)
            .map(|r| {
                (0..k)
                    .map(|_| {
                        let v = rng.normal(0.0, scale);
                        if r < 4 {
                            0.0
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let label_rule = match preset {
            Preset::Nonlinear => saturating_rule(n_classes, k, &mut rng),
            _ => LabelRule::ConceptMeans,
        };
        let (sigma_c, sigma_z) = if preset == Preset::Noiseless { (0.0, 0.0) } else { (0.1, 0.05) };
        SyntheticSpec {
            n_classes,
            k,
            d,
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            concept_means,
            sigma_c,
            embedding_map,
            sigma_z,
            shortcut_dims,
            shortcut_strength: if shortcut_dims > 0 { 5.0 } else { 0.0 },
            label_rule,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(format!("synthetic spec: {m}")));
        if self.n_classes < 2 || self.k == 0 || self.d == 0 {
            return bad("need n_classes ≥ 2, k ≥ 1, d ≥ 1".into());
        }
        if self.n_train == 0 {
            return bad("n_train must be > 0".into());
        }
        for (name, s) in [("sigma_c", self.sigma_c), ("sigma_z", self.sigma_z)] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be finite and ≥ 0, got {s}"));
            }
        }
        if !self.shortcut_strength.is_finite() {
            return bad("shortcut_strength must be finite".into());
        }
        if self.shortcut_dims > 2 * self.d - self.k.min(2 * self.d) {
            return bad(format!(
                "shortcut_dims {} exceeds 2d − k = {}",
                self.shortcut_dims,
                2 * self.d as i64 - self.k as i64
            ));
        }
        if self.embedding_map.len() != 2 * self.d
            || self.embedding_map.iter().any(|r| r.len() != self.k || r.iter().any(|v| !v.is_finite()))
        {
            return bad(format!("embedding_map must be {}×{} finite", 2 * self.d, self.k));
        }
        match &self.label_rule {
            LabelRule::ConceptMeans => {
                if self.concept_means.len() != self.n_classes
                    || self
                        .concept_means
                        .iter()
                        .any(|r| r.len() != self.k || r.iter().any(|v| !(0.0..=1.0).contains(v)))
                {
                    return bad(format!(
                        "concept_means must be {}×{} with entries in [0,1]",
                        self.n_classes, self.k
                    ));
                }
            }
            LabelRule::Saturating { kappa, theta, weights, bias } => {
                if !(kappa.is_finite() && *kappa > 0.0)
                    || theta.len() != self.k
                    || bias.len() != self.n_classes
                    || weights.len() != self.n_classes
                    || weights.iter().any(|r| r.len() != self.k)
                {
                    return bad("saturating rule shapes disagree with n_classes/k".into());
                }
            }
        }
        Ok(())
    }
}

fn saturating_scores(c: &[f64], kappa: f64, theta: &[f64], weights: &[Vec<f64>], bias: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (o, (w, b)) in weights.iter().zip(bias).enumerate() {
        let s = b + w
            .iter()
            .zip(c.iter().zip(theta))
            .map(|(w, (c, t))| w * (kappa * (c - t)).tanh())
            .sum::<f64>();
        if s > best.1 {
            best = (o, s);
        }
    }
    best.0
}

/// Random saturating rule with biases tuned so classes are near-balanced.
fn saturating_rule(n_classes: usize, k: usize, rng: &mut Rng) -> LabelRule {
    let kappa = 8.0;
    let theta: Vec<f64> = (0..k).map(|_| rng.uniform_range(0.3, 0.7)).collect();
    let weights: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..k).map(|_| rng.normal(0.0, 1.0)).collect())
        .collect();
    let mut bias = vec![0.0; n_classes];
    let calib: Vec<Vec<f64>> = (0..4000).map(|_| (0..k).map(|_| rng.uniform()).collect()).collect();
    for _ in 0..200 {
        let mut counts = vec![0usize; n_classes];
        for c in &calib {
            counts[saturating_scores(c, kappa, &theta, &weights, &bias)] += 1;
        }
        for (b, n) in bias.iter_mut().zip(&counts) {
            *b -= 0.5 * (*n as f64 / calib.len() as f64 - 1.0 / n_classes as f64);
        }
    }
    LabelRule::Saturating { kappa, theta, weights, bias }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed).fork(1);
    let n = spec.n_train + spec.n_val + spec.n_test;
    let width = 2 * spec.d;
    let mut samples = Vec::with_capacity(n);
    for idx in 0..n {
        let (y, c) = match &spec.label_rule {
            LabelRule::ConceptMeans => {
                let y = rng.index(spec.n_classes);
                let c: Vec<f64> = spec.concept_means[y]
                    .iter()
                    .map(|&m| (m + noise(&mut rng, spec.sigma_c)).clamp(0.0, 1.0))
                    .collect();
                (y, c)
            }
            LabelRule::Saturating { kappa, theta, weights, bias } => {
                let c0: Vec<f64> = (0..spec.k).map(|_| rng.uniform()).collect();
                let y = saturating_scores(&c0, *kappa, theta, weights, bias);
                let c = c0
                    .iter()
                    .map(|&v| (v + noise(&mut rng, spec.sigma_c)).clamp(0.0, 1.0))
                    .collect();
                (y, c)
            }
        };
        let mut z: Vec<f64> = spec
            .embedding_map
            .iter()
            .map(|row| row.iter().zip(&c).map(|(a, c)| a * c).sum::<f64>() + noise(&mut rng, spec.sigma_z))
            .collect();
        debug_assert_eq!(z.len(), width);
        for (j, v) in z.iter_mut().take(spec.shortcut_dims).enumerate() {
            if j % spec.n_classes == y {
                *v += spec.shortcut_strength;
            }
        }
        let split = if idx < spec.n_train {
            Split::Train
        } else if idx < spec.n_train + spec.n_val {
            Split::Val
        } else {
            Split::Test
        };
        samples.push(Sample {
            id: format!("s{idx:05}"),
            z,
            c,
            y,
            split,
        });
    }
    let ds = Dataset {
        concept_names: (0..spec.k).map(|i| format!("concept_{i:02}")).collect(),
        label_names: (0..spec.n_classes).map(|o| format!("class_{o}")).collect(),
        d: spec.d,
        text_only: false,
        samples,
        normalization: None,
    };
    ds.validate()?;
    Ok(ds)
}

/// Always consumes one draw so that zero noise keeps the stream aligned.
fn noise(rng: &mut Rng, sd: f64) -> f64 {
    let e = rng.normal(0.0, 1.0);
    sd * e
}
