use rayon::prelude::*;

use super::{class_members, discrete_entropy, kde_mi, kde_mi_with_grad, KdeConfig};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Squared normalised leakage for one concept column and its gradient with
/// respect to the predicted column. The true-concept information is a
/// constant.
pub fn ctl_loss(
    c_hat: &[f64],
    c_true: &[f64],
    y: &[usize],
    config: &KdeConfig,
) -> Result<(f64, Vec<f64>)> {
    let h_y = discrete_entropy(y)?;
    if h_y <= 0.0 {
        return Err(Error::Argument(
            "degenerate labels: label entropy is zero".into(),
        ));
    }
    if c_hat.len() != c_true.len() {
        return Err(Error::Shape(format!(
            "predicted column has {} rows, true column {}",
            c_hat.len(),
            c_true.len()
        )));
    }
    let (mi_hat, dmi) = kde_mi_with_grad(c_hat, y, config)?;
    let mi_true = kde_mi(c_true, y, config)?;
    let delta = (mi_hat - mi_true) / h_y;
    let scale = 2.0 * delta / h_y;
    Ok((delta * delta, dmi.into_iter().map(|g| scale * g).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeakageOutcome {
    Computed { loss: f64, grad: Matrix },
    /// A class in the batch has too few members for the leave-one-out estimate.
    Skipped { class: usize, count: usize },
}

impl LeakageOutcome {
    pub fn loss(&self) -> Option<f64> {
        match self {
            LeakageOutcome::Computed { loss, .. } => Some(*loss),
            LeakageOutcome::Skipped { .. } => None,
        }
    }
}

/// Mean of [`ctl_loss`] over the concept columns of a batch.
pub fn leakage_loss_batch(
    c_hat: &Matrix,
    c_true: &Matrix,
    y: &[usize],
    config: &KdeConfig,
) -> Result<LeakageOutcome> {
    if c_hat.shape() != c_true.shape() {
        return Err(Error::Shape(format!(
            "predicted concepts {:?} vs true concepts {:?}",
            c_hat.shape(),
            c_true.shape()
        )));
    }
    if c_hat.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} concept rows for {} labels",
            c_hat.rows(),
            y.len()
        )));
    }
    if let Some((class, members)) = class_members(y)
        .into_iter()
        .find(|(_, m)| m.len() < config.min_class_count)
    {
        return Ok(LeakageOutcome::Skipped {
            class,
            count: members.len(),
        });
    }
    let k = c_hat.cols();
    let per_column: Vec<(f64, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|j| ctl_loss(&c_hat.column(j), &c_true.column(j), y, config))
        .collect::<Result<_>>()?;
    let mut grad = Matrix::zeros(c_hat.rows(), k);
    let mut loss = 0.0;
    let inv_k = 1.0 / k as f64;
    for (j, (l, g)) in per_column.into_iter().enumerate() {
        loss += l;
        let scaled: Vec<f64> = g.into_iter().map(|v| v * inv_k).collect();
        grad.set_column(j, &scaled);
    }
    Ok(LeakageOutcome::Computed {
        loss: loss * inv_k,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng};

    fn instance(rng: &mut Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let c: Vec<f64> = y.iter().map(|&l| rng.normal(0.3 * l as f64, 0.5)).collect();
        let c_hat: Vec<f64> = c
            .iter()
            .zip(&y)
            .map(|(v, &l)| v + 0.4 * l as f64 + rng.normal(0.0, 0.2))
            .collect();
        (c_hat, c, y)
    }

    #[test]
    fn zero_when_prediction_is_truth() {
        let mut rng = Rng::new(1);
        let (_, c, y) = instance(&mut rng, 40);
        let (loss, grad) = ctl_loss(&c, &c, &y, &KdeConfig::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(9);
        let cfg = KdeConfig::default();
        for trial in 0..20 {
            let (c_hat, c, y) = instance(&mut rng, 40);
            let (_, analytic) = ctl_loss(&c_hat, &c, &y, &cfg).unwrap();
            let numeric =
                finite_diff_grad(|p| ctl_loss(p, &c, &y, &cfg).unwrap().0, &c_hat, 1e-5).unwrap();
            let err = relative_error(&analytic, &numeric, 1e-12);
            assert!(err < 1e-4, "trial {trial}: {err}");
        }
    }

    #[test]
    fn penalises_information_loss_too() {
        let mut rng = Rng::new(4);
        let y: Vec<usize> = (0..80).map(|i| i % 2).collect();
        let c: Vec<f64> = y.iter().map(|&l| rng.normal(2.0 * l as f64, 0.5)).collect();
        let washed: Vec<f64> = (0..80).map(|_| rng.normal(0.0, 1.0)).collect();
        let (loss, _) = ctl_loss(&washed, &c, &y, &KdeConfig::default()).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn degenerate_labels_rejected() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert!(ctl_loss(&x, &x, &[1, 1, 1, 1], &KdeConfig::default()).is_err());
    }

    #[test]
    fn batch_reduces_to_single_column_and_is_order_free() {
        let mut rng = Rng::new(12);
        let cfg = KdeConfig::default();
        let (c_hat, c, y) = instance(&mut rng, 30);
        let ch = Matrix::from_vec(30, 1, c_hat.clone()).unwrap();
        let ct = Matrix::from_vec(30, 1, c.clone()).unwrap();
        let batch = leakage_loss_batch(&ch, &ct, &y, &cfg).unwrap();
        let (single, _) = ctl_loss(&c_hat, &c, &y, &cfg).unwrap();
        assert_eq!(batch.loss(), Some(single));

        let mut perm: Vec<usize> = (0..30).collect();
        rng.shuffle(&mut perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let permuted =
            leakage_loss_batch(&ch.select_rows(&perm), &ct.select_rows(&perm), &yp, &cfg).unwrap();
        assert!((permuted.loss().unwrap() - single).abs() < 1e-12);
    }

    #[test]
    fn identical_matrices_give_zero() {
        let mut rng = Rng::new(3);
        let data: Vec<f64> = (0..60).map(|_| rng.uniform()).collect();
        let m = Matrix::from_vec(20, 3, data).unwrap();
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let out = leakage_loss_batch(&m, &m, &y, &KdeConfig::default()).unwrap();
        assert_eq!(out.loss(), Some(0.0));
    }

    #[test]
    fn thin_class_skips_batch() {
        let m = Matrix::from_vec(5, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let out = leakage_loss_batch(&m, &m, &[0, 0, 0, 0, 1], &KdeConfig::default()).unwrap();
        assert_eq!(out, LeakageOutcome::Skipped { class: 1, count: 1 });
    }
}
