use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// Affine map from the fused embedding to concept scores. No activation:
/// concept scores are regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckLayer {
    /// `k × input_width`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: Matrix,
}

impl BottleneckGrads {
    pub fn flat_params(&self) -> Vec<f64> {
        self.weight.as_slice().iter().chain(&self.bias).copied().collect()
    }
}

impl BottleneckLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bottleneck bias has {} entries for {} concepts",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(BottleneckLayer { weight, bias })
    }

    /// Weights ~ Normal(0, std = 1/√width), zero bias.
    pub fn init(input_width: usize, k: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / (input_width as f64).sqrt();
        let data = (0..k * input_width).map(|_| rng.normal(0.0, std)).collect();
        BottleneckLayer {
            weight: Matrix::from_vec(k, input_width, data).expect("sized"),
            bias: vec![0.0; k],
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn k(&self) -> usize {
        self.weight.rows()
    }

    fn check_width(&self, z: &Matrix) -> Result<()> {
        if z.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "bottleneck expects input width {}, got {}",
                self.input_width(),
                z.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &Matrix) -> Result<Matrix> {
        self.check_width(z)?;
        let mut out = z.matmul_t(&self.weight)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn backward(&self, z: &Matrix, d_out: &Matrix) -> Result<BottleneckGrads> {
        self.check_width(z)?;
        if d_out.shape() != (z.rows(), self.k()) {
            return Err(Error::Shape(format!(
                "bottleneck upstream gradient {:?}, expected ({}, {})",
                d_out.shape(),
                z.rows(),
                self.k()
            )));
        }
        let weight = d_out.transpose().matmul(z)?;
        let mut bias = vec![0.0; self.k()];
        for i in 0..d_out.rows() {
            for (b, g) in bias.iter_mut().zip(d_out.row(i)) {
                *b += g;
            }
        }
        let input = d_out.matmul(&self.weight)?;
        Ok(BottleneckGrads {
            weight,
            bias,
            input,
        })
    }

    pub fn params(&self) -> Vec<f64> {
        self.weight.as_slice().iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let nw = self.weight.as_slice().len();
        if p.len() != nw + self.bias.len() {
            return Err(Error::Shape("bottleneck parameter vector length".into()));
        }
        self.weight.as_mut_slice().copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
        Ok(())
    }
}
