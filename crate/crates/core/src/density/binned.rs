use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedConfig {
    pub n_bins: usize,
}

impl Default for BinnedConfig {
    fn default() -> Self {
        BinnedConfig { n_bins: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinnedMi {
    pub mi: f64,
    pub h_u: f64,
    pub h_v: f64,
}

/// Plug-in entropy of empirical class frequencies, in nats.
pub fn discrete_entropy(y: &[usize]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Argument("discrete_entropy: empty label vector".into()));
    }
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for &l in y {
        *counts.entry(l).or_default() += 1;
    }
    Ok(entropy_of_counts(counts.into_values(), y.len()))
}

// Summed in ascending count order so that permuted tables give bit-equal sums.
fn entropy_of_counts(counts: impl IntoIterator<Item = usize>, total: usize) -> f64 {
    let mut counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Equal-width bin index over `[min, max]`; a constant variable lands in bin 0.
fn bin_indices(x: &[f64], n_bins: usize) -> Vec<usize> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = hi - lo;
    if !(width > 0.0) {
        return vec![0; x.len()];
    }
    x.iter()
        .map(|&v| (((v - lo) / width * n_bins as f64).floor() as usize).min(n_bins - 1))
        .collect()
}

/// Plug-in `I(u; v)`, `H(u)`, `H(v)` over per-variable equal-width bins.
pub fn binned_mi(u: &[f64], v: &[f64], config: &BinnedConfig) -> Result<BinnedMi> {
    let nb = config.n_bins;
    if nb < 2 {
        return Err(Error::Argument("binned_mi: n_bins must be >= 2".into()));
    }
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "binned_mi: lengths {} and {} differ",
            u.len(),
            v.len()
        )));
    }
    if u.len() < nb {
        return Err(Error::Argument(format!(
            "binned_mi: {} samples for {nb} bins",
            u.len()
        )));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::Numeric("binned_mi: non-finite input".into()));
    }
    let n = u.len();
    let bu = bin_indices(u, nb);
    let bv = bin_indices(v, nb);
    let mut cu = vec![0usize; nb];
    let mut cv = vec![0usize; nb];
    let mut joint = vec![0usize; nb * nb];
    for (&a, &b) in bu.iter().zip(&bv) {
        cu[a] += 1;
        cv[b] += 1;
        joint[a * nb + b] += 1;
    }
    let h_u = entropy_of_counts(cu, n);
    let h_v = entropy_of_counts(cv, n);
    let h_uv = entropy_of_counts(joint, n);
    let mi = ((h_u + h_v) - h_uv).clamp(0.0, h_u.min(h_v));
    Ok(BinnedMi { mi, h_u, h_v })
}
