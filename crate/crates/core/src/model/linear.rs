use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// Baseline concept-to-class layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// `n_outputs × k`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: Matrix,
}

impl LinearHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape("linear head bias/weight mismatch".into()));
        }
        Ok(LinearHead { weight, bias })
    }

    pub fn init(k: usize, n_out: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / (k as f64).sqrt();
        let data = (0..k * n_out).map(|_| rng.normal(0.0, std)).collect();
        LinearHead {
            weight: Matrix::from_vec(n_out, k, data).expect("sized"),
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "linear head expects {} concepts, got {}",
                self.n_inputs(),
                x.cols()
            )));
        }
        let mut out = x.matmul_t(&self.weight)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn backward(&self, x: &Matrix, d_logits: &Matrix) -> Result<LinearGrads> {
        if x.cols() != self.n_inputs() || d_logits.shape() != (x.rows(), self.n_outputs()) {
            return Err(Error::Shape("linear head backward shapes".into()));
        }
        let weight = d_logits.transpose().matmul(x)?;
        let mut bias = vec![0.0; self.n_outputs()];
        for i in 0..d_logits.rows() {
            for (b, g) in bias.iter_mut().zip(d_logits.row(i)) {
                *b += g;
            }
        }
        let input = d_logits.matmul(&self.weight)?;
        Ok(LinearGrads {
            weight,
            bias,
            input,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng};

    fn loss(head: &LinearHead, x: &Matrix, probe: &Matrix) -> f64 {
        let out = head.forward(x).unwrap();
        out.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(23);
        for _ in 0..20 {
            let head = LinearHead::init(5, 3, &mut rng);
            let x = Matrix::from_vec(4, 5, (0..20).map(|_| rng.uniform()).collect()).unwrap();
            let probe = Matrix::from_vec(4, 3, (0..12).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let grads = head.backward(&x, &probe).unwrap();

            let mut p0: Vec<f64> = head.weight.as_slice().to_vec();
            p0.extend(&head.bias);
            let numeric = finite_diff_grad(
                |p| {
                    let h = LinearHead::new(Matrix::from_vec(3, 5, p[..15].to_vec()).unwrap(), p[15..].to_vec()).unwrap();
                    loss(&h, &x, &probe)
                },
                &p0,
                1e-5,
            )
            .unwrap();
            let mut analytic = grads.weight.as_slice().to_vec();
            analytic.extend(&grads.bias);
            assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-4);

            let numeric_x = finite_diff_grad(
                |v| loss(&head, &Matrix::from_vec(4, 5, v.to_vec()).unwrap(), &probe),
                x.as_slice(),
                1e-5,
            )
            .unwrap();
            assert!(relative_error(grads.input.as_slice(), &numeric_x, 1e-8) < 1e-4);
        }
    }
}
