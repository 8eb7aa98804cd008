//! Dataset schema, ingestion, concept annotation and the synthetic generator.

mod annotate;
mod io;
mod normalize;
mod synthetic;

pub use annotate::{annotate_concepts, annotate_dataset, cosine_similarity, ConceptEmbedding};
pub use io::{
    load_concept_embeddings, load_dataset, read_binary_embeddings, save_dataset,
    write_binary_embeddings, EmbeddingStorage, MANIFEST_VERSION,
};
pub use normalize::{normalize_concepts, NormalizationWarning};
pub use synthetic::{generate_synthetic, LabelRule, Preset, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Fused embedding `[image ‖ text]`, or the text embedding alone.
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub y: usize,
    pub split: Split,
}

/// Per-concept min/max on the raw annotation scale, fitted on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub concept_names: Vec<String>,
    pub label_names: Vec<String>,
    /// Per-modality embedding width.
    pub d: usize,
    /// When set, `z` is the text embedding alone (width `d`).
    pub text_only: bool,
    pub samples: Vec<Sample>,
    pub normalization: Option<Normalization>,
}

/// Dense view of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub ids: Vec<String>,
    pub z: Matrix,
    pub c: Matrix,
    pub y: Vec<usize>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> SplitData {
        SplitData {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            z: self.z.select_rows(idx),
            c: self.c.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

impl Dataset {
    pub fn k(&self) -> usize {
        self.concept_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn z_width(&self) -> usize {
        if self.text_only {
            self.d
        } else {
            2 * self.d
        }
    }

    /// Checks names, widths, label ranges and finiteness; errors name the
    /// offending sample.
    pub fn validate(&self) -> Result<()> {
        check_names("concept", &self.concept_names)?;
        check_names("label", &self.label_names)?;
        if self.d == 0 {
            return Err(Error::Argument("embedding width d must be > 0".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Argument(format!("duplicate sample id {:?}", s.id)));
            }
            if s.z.len() != self.z_width() {
                return Err(Error::Shape(format!(
                    "sample {:?}: z has {} values, expected {}",
                    s.id,
                    s.z.len(),
                    self.z_width()
                )));
            }
            if s.c.len() != self.k() {
                return Err(Error::Shape(format!(
                    "sample {:?}: c has {} values, expected k = {}",
                    s.id,
                    s.c.len(),
                    self.k()
                )));
            }
            if s.y >= self.n_labels() {
                return Err(Error::Argument(format!(
                    "sample {:?}: label {} out of range ({} labels)",
                    s.id,
                    s.y,
                    self.n_labels()
                )));
            }
            if s.z.iter().chain(&s.c).any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("sample {:?}: non-finite value", s.id)));
            }
        }
        if let Some(n) = &self.normalization {
            if n.min.len() != self.k() || n.max.len() != self.k() {
                return Err(Error::Shape("normalization length differs from k".into()));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> SplitData {
        let members: Vec<&Sample> = self.samples.iter().filter(|s| s.split == split).collect();
        let mut z = Vec::with_capacity(members.len() * self.z_width());
        let mut c = Vec::with_capacity(members.len() * self.k());
        for s in &members {
            z.extend_from_slice(&s.z);
            c.extend_from_slice(&s.c);
        }
        SplitData {
            ids: members.iter().map(|s| s.id.clone()).collect(),
            z: Matrix::from_vec(members.len(), self.z_width(), z).expect("validated widths"),
            c: Matrix::from_vec(members.len(), self.k(), c).expect("validated widths"),
            y: members.iter().map(|s| s.y).collect(),
        }
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }
}

fn check_names(kind: &str, names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::Argument(format!("{kind} name list is empty")));
    }
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if n.is_empty() {
            return Err(Error::Argument(format!("empty {kind} name")));
        }
        if !seen.insert(n) {
            return Err(Error::Argument(format!("duplicate {kind} name {n:?}")));
        }
    }
    Ok(())
}

/// Deterministic split assignment from `(seed, fractions)`; fractions are
/// train/val/test and must sum to 1.
pub fn assign_splits(n: usize, seed: u64, fractions: [f64; 3]) -> Result<Vec<Split>> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| *f < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).fork(0x5911).shuffle(&mut order);
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_deterministic_and_exhaustive() {
        let a = assign_splits(100, 4, [0.6, 0.2, 0.2]).unwrap();
        let b = assign_splits(100, 4, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!(a, b);
        let count = |s| a.iter().filter(|&&x| x == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (60, 20, 20));
        assert_ne!(a, assign_splits(100, 5, [0.6, 0.2, 0.2]).unwrap());
        assert!(assign_splits(10, 0, [0.5, 0.5, 0.5]).is_err());
    }
}
