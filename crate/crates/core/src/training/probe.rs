use crate::model::argmax_rows;
use crate::numerics::{adam_update, AdamConfig, AdamState, Matrix};
use crate::{Error, Result};

use super::objective::cross_entropy;

const STEPS: usize = 400;
const LR: f64 = 0.05;

/// Test accuracy of a softmax-regression probe fitted on standardised
/// training features with full-batch Adam from zero weights.
pub fn linear_probe_accuracy(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    test_y: &[usize],
    n_classes: usize,
) -> Result<f64> {
    if train_x.rows() != train_y.len() || test_x.rows() != test_y.len() || train_x.cols() != test_x.cols() {
        return Err(Error::Shape("probe inputs disagree in shape".into()));
    }
    if train_y.is_empty() || test_y.is_empty() {
        return Err(Error::Argument("probe needs nonempty train and test sets".into()));
    }
    let width = train_x.cols();
    let n = train_x.rows() as f64;
    let mut mean = vec![0.0; width];
    let mut sd = vec![0.0; width];
    for r in 0..train_x.rows() {
        for (m, v) in mean.iter_mut().zip(train_x.row(r)) {
            *m += v / n;
        }
    }
    for r in 0..train_x.rows() {
        for ((s, v), m) in sd.iter_mut().zip(train_x.row(r)).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    let standardise = |x: &Matrix| {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&mean).zip(&sd) {
                *v = (*v - m) / s;
            }
        }
        out
    };
    let xs = standardise(train_x);
    let xt = standardise(test_x);

    // params: weight (classes × width) then bias
    let mut params = vec![0.0; n_classes * (width + 1)];
    let mut state = AdamState::new(params.len(), AdamConfig::default());
    let logits = |p: &[f64], x: &Matrix| -> Result<Matrix> {
        let w = Matrix::from_vec(n_classes, width, p[..n_classes * width].to_vec())?;
        let mut l = x.matmul_t(&w)?;
        for r in 0..l.rows() {
            for (v, b) in l.row_mut(r).iter_mut().zip(&p[n_classes * width..]) {
                *v += b;
            }
        }
        Ok(l)
    };
    for _ in 0..STEPS {
        let (_, d) = cross_entropy(&logits(&params, &xs)?, train_y);
        let gw = d.transpose().matmul(&xs)?;
        let mut grads = gw.into_vec();
        for o in 0..n_classes {
            grads.push((0..d.rows()).map(|r| d[(r, o)]).sum());
        }
        adam_update(&mut params, &grads, &mut state, LR)?;
    }
    let pred = argmax_rows(&logits(&params, &xt)?);
    let correct = pred.iter().zip(test_y).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / test_y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn separable_data_is_learned_and_noise_is_not() {
        let mut rng = Rng::new(2);
        let make = |rng: &mut Rng, n: usize, signal: f64| {
            let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let x: Vec<f64> = (0..n * 4)
                .map(|i| rng.normal(if i % 4 == y[i / 4] { signal } else { 0.0 }, 1.0))
                .collect();
            (Matrix::from_vec(n, 4, x).unwrap(), y)
        };
        let (a, ya) = make(&mut rng, 300, 6.0);
        let (b, yb) = make(&mut rng, 300, 6.0);
        assert!(linear_probe_accuracy(&a, &ya, &b, &yb, 3).unwrap() > 0.97);
        let (a, ya) = make(&mut rng, 300, 0.0);
        let (b, yb) = make(&mut rng, 300, 0.0);
        assert!(linear_probe_accuracy(&a, &ya, &b, &yb, 3).unwrap() < 0.5);
    }
}
