use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::class_members;
use crate::{Error, Result};

const SCOTT_FACTOR: f64 = 1.06;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Scott,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub bandwidth: BandwidthRule,
    pub sigma_floor: f64,
    pub min_class_count: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth: BandwidthRule::Scott,
            sigma_floor: 1e-6,
            min_class_count: 2,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if let BandwidthRule::Fixed(s) = self.bandwidth {
            if !(s > 0.0) {
                return Err(Error::Argument(format!("fixed bandwidth must be > 0, got {s}")));
            }
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Argument("sigma_floor must be > 0".into()));
        }
        if self.min_class_count < 2 {
            return Err(Error::Argument("min_class_count must be >= 2".into()));
        }
        Ok(())
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `max(1.06 · std(x) · N^(-1/5), sigma_floor)`, population std.
pub fn scott_bandwidth(x: &[f64], config: &KdeConfig) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Argument("scott_bandwidth: empty sample".into()));
    }
    let (_, std) = mean_std(x);
    let n = x.len() as f64;
    Ok((SCOTT_FACTOR * std * n.powf(-0.2)).max(config.sigma_floor))
}

/// Bandwidth under `config`, plus `dσ/dx_k` when σ actually depends on `x`.
fn bandwidth_with_grad(x: &[f64], config: &KdeConfig) -> Result<(f64, Option<Vec<f64>>)> {
    match config.bandwidth {
        BandwidthRule::Fixed(s) => Ok((s, None)),
        BandwidthRule::Scott => {
            let (mean, std) = mean_std(x);
            let n = x.len() as f64;
            let raw = SCOTT_FACTOR * std * n.powf(-0.2);
            if raw <= config.sigma_floor {
                return Ok((config.sigma_floor, None));
            }
            let c = SCOTT_FACTOR * n.powf(-0.2) / (n * std);
            Ok((raw, Some(x.iter().map(|v| c * (v - mean)).collect())))
        }
    }
}

pub fn resolve_bandwidth(x: &[f64], config: &KdeConfig) -> Result<f64> {
    match config.bandwidth {
        BandwidthRule::Fixed(s) => Ok(s),
        BandwidthRule::Scott => scott_bandwidth(x, config),
    }
}

/// `K_σ(u) = (2πσ²)^(-1/2) exp(-u² / 2σ²)`.
pub fn gaussian_kernel(u: f64, sigma: f64) -> f64 {
    (2.0 * PI * sigma * sigma).powf(-0.5) * (-(u * u) / (2.0 * sigma * sigma)).exp()
}

/// Leave-one-out density at `x[i]`.
pub fn kde_marginal_density(x: &[f64], i: usize, sigma: f64) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::Estimator(
            "leave-one-out density needs at least 2 samples".into(),
        ));
    }
    if i >= x.len() {
        return Err(Error::Argument(format!("index {i} out of range")));
    }
    let sum: f64 = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &xj)| gaussian_kernel(x[i] - xj, sigma))
        .sum();
    Ok(sum / (x.len() - 1) as f64)
}

/// Leave-one-out density at `x[i]` restricted to members of `class`.
pub fn kde_conditional_density(
    x: &[f64],
    y: &[usize],
    i: usize,
    class: usize,
    sigma: f64,
    config: &KdeConfig,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("x has {} entries, y has {}", x.len(), y.len())));
    }
    if i >= x.len() {
        return Err(Error::Argument(format!("index {i} out of range")));
    }
    let members = y.iter().filter(|&&l| l == class).count();
    if members < config.min_class_count {
        return Err(Error::Estimator(format!(
            "class {class} has {members} samples, need at least {}",
            config.min_class_count
        )));
    }
    let delta = usize::from(y[i] == class);
    let sum: f64 = (0..x.len())
        .filter(|&j| j != i && y[j] == class)
        .map(|j| gaussian_kernel(x[i] - x[j], sigma))
        .sum();
    Ok(sum / (members - delta) as f64)
}

fn check_inputs(x: &[f64], y: &[usize], config: &KdeConfig) -> Result<Vec<(usize, Vec<usize>)>> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("x has {} entries, y has {}", x.len(), y.len())));
    }
    if x.len() < 4 {
        return Err(Error::Estimator(format!(
            "kde_mi needs at least 4 samples, got {}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("kde_mi: non-finite value at index {i}")));
    }
    let classes = class_members(y);
    for (label, members) in &classes {
        if members.len() < config.min_class_count {
            return Err(Error::Estimator(format!(
                "class {label} has {} samples, need at least {}",
                members.len(),
                config.min_class_count
            )));
        }
    }
    Ok(classes)
}

/// Leave-one-out KDE estimate of `I(x; y)` in nats.
pub fn kde_mi(x: &[f64], y: &[usize], config: &KdeConfig) -> Result<f64> {
    kde_mi_impl(x, y, config, false).map(|(mi, _)| mi)
}

/// Gradient of [`kde_mi`] with respect to every `x_i`, including the path
/// through the Scott bandwidth.
pub fn kde_mi_backward(x: &[f64], y: &[usize], config: &KdeConfig) -> Result<Vec<f64>> {
    kde_mi_with_grad(x, y, config).map(|(_, g)| g)
}

pub fn kde_mi_with_grad(x: &[f64], y: &[usize], config: &KdeConfig) -> Result<(f64, Vec<f64>)> {
    kde_mi_impl(x, y, config, true).map(|(mi, g)| (mi, g.expect("gradient requested")))
}

// The normalisation of K_σ cancels in p(x|y)/p(x), so everything below works
// with log-sums of l_ij = -(x_i - x_j)^2 / 2σ^2, shifted by the per-row
// maximum to stay finite for well separated samples.
fn kde_mi_impl(
    x: &[f64],
    y: &[usize],
    config: &KdeConfig,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let classes = check_inputs(x, y, config)?;
    let n = x.len();
    let (sigma, dsigma) = bandwidth_with_grad(x, config)?;
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);

    let mut class_size = vec![0usize; n];
    for (_, members) in &classes {
        for &i in members {
            class_size[i] = members.len();
        }
    }

    let mut max_all = vec![f64::NEG_INFINITY; n];
    let mut max_same = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let l = -(x[i] - x[j]).powi(2) * inv2s2;
            if l > max_all[i] {
                max_all[i] = l;
            }
            if y[i] == y[j] && l > max_same[i] {
                max_same[i] = l;
            }
        }
    }
    let mut log_all = vec![0.0; n];
    let mut log_same = vec![0.0; n];
    for i in 0..n {
        let (mut sa, mut ss) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let l = -(x[i] - x[j]).powi(2) * inv2s2;
            sa += (l - max_all[i]).exp();
            if y[i] == y[j] {
                ss += (l - max_same[i]).exp();
            }
        }
        log_all[i] = max_all[i] + sa.ln();
        log_same[i] = max_same[i] + ss.ln();
    }

    let ln_n1 = ((n - 1) as f64).ln();
    let mi = (0..n)
        .map(|i| log_same[i] - ((class_size[i] - 1) as f64).ln() - log_all[i] + ln_n1)
        .sum::<f64>()
        / n as f64;
    if !mi.is_finite() {
        return Err(Error::Numeric("kde_mi: non-finite estimate".into()));
    }
    if !want_grad {
        return Ok((mi, None));
    }

    // w_ij = (1/N) [s_ij exp(l_ij - log B_i) - exp(l_ij - log A_i)] is the
    // sensitivity of the estimate to l_ij.
    let inv_n = 1.0 / n as f64;
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut grad = vec![0.0; n];
    let mut dmi_dsigma = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = x[i] - x[j];
            let l = -d * d * inv2s2;
            let same = y[i] == y[j];
            let mut w = -(l - log_all[i]).exp() - (l - log_all[j]).exp();
            if same {
                w += (l - log_same[i]).exp() + (l - log_same[j]).exp();
            }
            w *= inv_n;
            // ∂l_ij/∂x_i = -d/σ², ∂l_ij/∂x_j = +d/σ², ∂l_ij/∂σ = d²/σ³
            let gx = w * d * inv_s2;
            grad[i] -= gx;
            grad[j] += gx;
            dmi_dsigma += w * d * d * inv_s2 / sigma;
        }
    }
    if let Some(ds) = dsigma {
        for (g, s) in grad.iter_mut().zip(ds) {
            *g += dmi_dsigma * s;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("kde_mi_backward: non-finite gradient".into()));
    }
    Ok((mi, Some(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng};

    fn k1(u: f64) -> f64 {
        (-(u * u) / 2.0).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn scott_examples() {
        let cfg = KdeConfig::default();
        // 32 points at ±2 have population std 2; 32^(1/5) = 2
        let x: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        assert!((scott_bandwidth(&x, &cfg).unwrap() - 1.06).abs() < 1e-12);
        assert_eq!(scott_bandwidth(&[3.0; 10], &cfg).unwrap(), 1e-6);
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        // 1.06 * 100^-0.2 = 0.42199...
        assert!((scott_bandwidth(&x, &cfg).unwrap() - 0.421_993_600_786_707).abs() < 1e-12);
        assert!(scott_bandwidth(&[], &cfg).is_err());
    }

    #[test]
    fn marginal_density_examples() {
        let d = kde_marginal_density(&[0.0, 1.0], 0, 1.0).unwrap();
        assert!((d - 0.241_970_724_519_143_37).abs() < 1e-12);
        let d = kde_marginal_density(&[0.0, 0.0, 0.0], 0, 0.3).unwrap();
        assert!((d - gaussian_kernel(0.0, 0.3)).abs() < 1e-15);
        assert!(kde_marginal_density(&[1.0], 0, 1.0).is_err());
    }

    #[test]
    fn marginal_density_translation_invariant() {
        let x = [0.1, 0.7, -0.4, 2.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        for i in 0..4 {
            let a = kde_marginal_density(&x, i, 0.5).unwrap();
            let b = kde_marginal_density(&shifted, i, 0.5).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_density_examples() {
        let cfg = KdeConfig::default();
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0, 0, 1, 1];
        let own = kde_conditional_density(&x, &y, 0, 0, 1.0, &cfg).unwrap();
        assert!((own - k1(1.0)).abs() < 1e-12);
        let other = kde_conditional_density(&x, &y, 0, 1, 1.0, &cfg).unwrap();
        assert!((other - (k1(2.0) + k1(3.0)) / 2.0).abs() < 1e-12);
        assert!((other - 0.02921).abs() < 1e-5);

        let x = [0.4, 0.4, 0.4, 9.0];
        let y = [0, 0, 0, 1];
        let at_peak = kde_conditional_density(&x, &y, 0, 0, 0.7, &cfg).unwrap();
        assert!((at_peak - gaussian_kernel(0.0, 0.7)).abs() < 1e-15);
        let err = kde_conditional_density(&x, &y, 0, 1, 0.7, &cfg).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    /// Direct transcription of the estimator through the density helpers.
    fn mi_from_densities(x: &[f64], y: &[usize], cfg: &KdeConfig) -> f64 {
        let sigma = resolve_bandwidth(x, cfg).unwrap();
        let n = x.len();
        (0..n)
            .map(|i| {
                let c = kde_conditional_density(x, y, i, y[i], sigma, cfg).unwrap();
                let m = kde_marginal_density(x, i, sigma).unwrap();
                (c / m).ln()
            })
            .sum::<f64>()
            / n as f64
    }

    fn random_instance(rng: &mut Rng, n: usize, classes: usize) -> (Vec<f64>, Vec<usize>) {
        let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let x = y
            .iter()
            .map(|&l| rng.normal(0.6 * l as f64, 1.0))
            .collect();
        (x, y)
    }

    #[test]
    fn log_domain_matches_density_definition() {
        let mut rng = Rng::new(3);
        for cfg in [
            KdeConfig::default(),
            KdeConfig {
                bandwidth: BandwidthRule::Fixed(0.4),
                ..KdeConfig::default()
            },
        ] {
            let (x, y) = random_instance(&mut rng, 30, 3);
            let a = kde_mi(&x, &y, &cfg).unwrap();
            let b = mi_from_densities(&x, &y, &cfg);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(11);
        for trial in 0..20 {
            let (x, y) = random_instance(&mut rng, 40, 2);
            let cfg = if trial % 4 == 3 {
                KdeConfig {
                    bandwidth: BandwidthRule::Fixed(0.5),
                    ..KdeConfig::default()
                }
            } else {
                KdeConfig::default()
            };
            let analytic = kde_mi_backward(&x, &y, &cfg).unwrap();
            let numeric = finite_diff_grad(|p| kde_mi(p, &y, &cfg).unwrap(), &x, 1e-5).unwrap();
            let err = relative_error(&analytic, &numeric, 1e-12);
            assert!(err < 1e-4, "trial {trial}: rel err {err}");
        }
    }

    #[test]
    fn mirrored_pair_has_antisymmetric_gradient() {
        let cfg = KdeConfig {
            bandwidth: BandwidthRule::Fixed(1.0),
            ..KdeConfig::default()
        };
        let x = [-1.0, -1.2, 1.0, 1.2];
        let y = [0, 0, 1, 1];
        let g = kde_mi_backward(&x, &y, &cfg).unwrap();
        assert!((g[0] + g[2]).abs() < 1e-14);
        assert!((g[1] + g[3]).abs() < 1e-14);
    }

    #[test]
    fn fixed_bandwidth_gradient_translation_invariant() {
        let cfg = KdeConfig {
            bandwidth: BandwidthRule::Fixed(0.8),
            ..KdeConfig::default()
        };
        let mut rng = Rng::new(5);
        let (x, y) = random_instance(&mut rng, 25, 2);
        let shifted: Vec<f64> = x.iter().map(|v| v + 3.0).collect();
        let a = kde_mi_backward(&x, &y, &cfg).unwrap();
        let b = kde_mi_backward(&shifted, &y, &cfg).unwrap();
        assert!(relative_error(&a, &b, 1e-12) < 1e-9);
    }

    #[test]
    fn affine_invariance_under_scott() {
        let cfg = KdeConfig::default();
        let mut rng = Rng::new(8);
        let (x, y) = random_instance(&mut rng, 60, 3);
        let base = kde_mi(&x, &y, &cfg).unwrap();
        for (a, b) in [(2.5, -1.0), (0.01, 7.0), (40.0, 0.0)] {
            let t: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            assert!((kde_mi(&t, &y, &cfg).unwrap() - base).abs() < 1e-10);
        }
    }

    #[test]
    fn independent_labels_average_near_zero() {
        let cfg = KdeConfig::default();
        let mut rng = Rng::new(21);
        let x: Vec<f64> = (0..500).map(|_| rng.normal(0.0, 1.0)).collect();
        let mut y: Vec<usize> = (0..500).map(|i| i % 2).collect();
        let mut total = 0.0;
        for _ in 0..50 {
            rng.shuffle(&mut y);
            total += kde_mi(&x, &y, &cfg).unwrap();
        }
        assert!((total / 50.0).abs() < 0.05);
    }

    #[test]
    fn separated_clusters_reach_label_entropy() {
        let cfg = KdeConfig::default();
        let mut rng = Rng::new(2);
        let y: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let x: Vec<f64> = y
            .iter()
            .map(|&l| rng.normal(10.0 * l as f64, 0.05))
            .collect();
        let mi = kde_mi(&x, &y, &cfg).unwrap();
        let ln2 = 2f64.ln();
        assert!((mi - ln2).abs() / ln2 < 0.1, "mi = {mi}");
    }

    #[test]
    fn class_count_violation_names_class() {
        let cfg = KdeConfig::default();
        let err = kde_mi(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0, 0, 0, 0, 7], &cfg).unwrap_err();
        assert!(matches!(err, Error::Estimator(_)));
        assert!(err.to_string().contains("class 7"));
    }

    #[test]
    fn label_relabel_invariance() {
        let cfg = KdeConfig::default();
        let mut rng = Rng::new(4);
        let (x, y) = random_instance(&mut rng, 45, 3);
        let relabeled: Vec<usize> = y.iter().map(|&l| [9, 2, 5][l]).collect();
        let a = kde_mi(&x, &y, &cfg).unwrap();
        let b = kde_mi(&x, &relabeled, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
