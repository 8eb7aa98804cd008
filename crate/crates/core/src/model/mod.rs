//! Concept bottleneck network: linear bottleneck `z ↦ ĉ` followed by either a
//! single-layer KAN head or a linear head. Every layer carries an explicit
//! backward pass.

mod bottleneck;
mod checkpoint;
mod kan;
mod linear;

pub use bottleneck::{BottleneckGrads, BottleneckLayer};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
    CHECKPOINT_FORMAT_VERSION,
};
pub use kan::{triangular_basis, KanGrads, KanGrid, KanHead};
pub use linear::{LinearGrads, LinearHead};

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Kan,
    Linear,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::Kan => "kan",
            HeadKind::Linear => "linear",
        })
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kan" => Ok(HeadKind::Kan),
            "linear" => Ok(HeadKind::Linear),
            other => Err(Error::Argument(format!("unknown head {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Kan(KanHead),
    Linear(LinearHead),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadGrads {
    Kan(KanGrads),
    Linear(LinearGrads),
}

impl HeadGrads {
    pub fn input(&self) -> &Matrix {
        match self {
            HeadGrads::Kan(g) => &g.input,
            HeadGrads::Linear(g) => &g.input,
        }
    }

    /// Parameter gradients in the order of [`Head::params`].
    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            HeadGrads::Kan(g) => g.coeffs.iter().chain(&g.scale).copied().collect(),
            HeadGrads::Linear(g) => g.weight.as_slice().iter().chain(&g.bias).copied().collect(),
        }
    }
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Kan(_) => HeadKind::Kan,
            Head::Linear(_) => HeadKind::Linear,
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            Head::Kan(h) => h.n_inputs(),
            Head::Linear(h) => h.n_inputs(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            Head::Kan(h) => h.n_outputs(),
            Head::Linear(h) => h.n_outputs(),
        }
    }

    pub fn forward(&self, concepts: &Matrix) -> Result<Matrix> {
        match self {
            Head::Kan(h) => h.forward(concepts),
            Head::Linear(h) => h.forward(concepts),
        }
    }

    pub fn backward(&self, concepts: &Matrix, d_logits: &Matrix) -> Result<HeadGrads> {
        match self {
            Head::Kan(h) => h.backward(concepts, d_logits).map(HeadGrads::Kan),
            Head::Linear(h) => h.backward(concepts, d_logits).map(HeadGrads::Linear),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Head::Kan(h) => h.coeffs().iter().chain(h.scale()).copied().collect(),
            Head::Linear(h) => h.weight.as_slice().iter().chain(&h.bias).copied().collect(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        match self {
            Head::Kan(h) => {
                let nc = h.coeffs().len();
                if p.len() != nc + h.scale().len() {
                    return Err(Error::Shape("kan parameter vector length".into()));
                }
                h.coeffs_mut().copy_from_slice(&p[..nc]);
                h.scale_mut().copy_from_slice(&p[nc..]);
            }
            Head::Linear(h) => {
                let nw = h.weight.as_slice().len();
                if p.len() != nw + h.bias.len() {
                    return Err(Error::Shape("linear parameter vector length".into()));
                }
                h.weight.as_mut_slice().copy_from_slice(&p[..nw]);
                h.bias.copy_from_slice(&p[nw..]);
            }
        }
        Ok(())
    }
}

/// Bottleneck plus head, with the names that give the bottleneck meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct CbmModel {
    pub concept_names: Vec<String>,
    pub label_names: Vec<String>,
    pub bottleneck: BottleneckLayer,
    pub head: Head,
    pub seed: u64,
    pub config_fingerprint: String,
}

/// Output of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub concepts: Matrix,
    pub logits: Matrix,
}

impl CbmModel {
    /// Freshly initialised model.
    pub fn init(
        input_width: usize,
        concept_names: Vec<String>,
        label_names: Vec<String>,
        head: HeadKind,
        grid: KanGrid,
        rng: &mut Rng,
    ) -> Result<Self> {
        let k = concept_names.len();
        let n_out = label_names.len();
        if k == 0 || n_out == 0 || input_width == 0 {
            return Err(Error::Argument(format!(
                "model needs positive sizes, got input {input_width}, k {k}, labels {n_out}"
            )));
        }
        let bottleneck = BottleneckLayer::init(input_width, k, rng);
        let head = match head {
            HeadKind::Kan => Head::Kan(KanHead::init(k, n_out, grid, rng)?),
            HeadKind::Linear => Head::Linear(LinearHead::init(k, n_out, rng)),
        };
        Ok(CbmModel {
            concept_names,
            label_names,
            bottleneck,
            head,
            seed: rng.seed(),
            config_fingerprint: String::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.concept_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn input_width(&self) -> usize {
        self.bottleneck.input_width()
    }

    pub fn forward(&self, z: &Matrix) -> Result<Prediction> {
        let concepts = self.bottleneck.forward(z)?;
        let logits = self.head.forward(&concepts)?;
        Ok(Prediction { concepts, logits })
    }
}

/// Row-wise argmax; ties resolve to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
