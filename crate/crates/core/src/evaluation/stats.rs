use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::FaithfulnessReport;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    /// `None` when the differences have zero variance or fewer than two pairs.
    pub t: Option<f64>,
    pub df: usize,
    /// One-tailed, alternative `mean(a − b) > 0`.
    pub p_value: f64,
}

/// One-tailed paired t-test of `a` against `b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    let df = n.saturating_sub(1);
    if n < 2 {
        return Ok(PairedT { t: None, df, p_value: 1.0 });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df as f64;
    if var <= 0.0 {
        return Ok(PairedT { t: None, df, p_value: 1.0 });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(PairedT { t: Some(t), df, p_value: 1.0 - dist.cdf(t) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub name: String,
    /// Concept indices ordered from highest to lowest rmse.
    pub concepts: Vec<usize>,
    pub rmse: Vec<f64>,
    pub ctl: Vec<f64>,
    pub mean_ctl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierTest {
    pub tier: String,
    pub test: PairedT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAnalysis {
    pub version: u32,
    /// Low, average and high detection accuracy, in that order.
    pub tiers: Vec<Tier>,
    /// Whether the low-accuracy tier leaks more than each other tier.
    pub tests: Vec<TierTest>,
}

/// Splits concepts into rmse terciles and compares their task leakage.
///
/// Concepts are ordered by descending rmse (ties by index) and cut into
/// three near-equal groups, earlier groups taking any remainder. Pairs are
/// formed by within-tier rank, truncated to the shorter tier.
pub fn rmse_tier_analysis(report: &FaithfulnessReport) -> Result<TierAnalysis> {
    let k = report.rmse.len();
    if k < 3 || report.ctl.len() != k {
        return Err(Error::Argument(format!("tier analysis needs k ≥ 3 concepts, got {k}")));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| report.rmse[b].total_cmp(&report.rmse[a]).then(a.cmp(&b)));
    let mut tiers = Vec::with_capacity(3);
    let mut start = 0;
    for (t, name) in ["low", "average", "high"].iter().enumerate() {
        let size = k / 3 + usize::from(t < k % 3);
        let members = order[start..start + size].to_vec();
        start += size;
        let ctl: Vec<f64> = members.iter().map(|&i| report.ctl[i]).collect();
        tiers.push(Tier {
            name: name.to_string(),
            rmse: members.iter().map(|&i| report.rmse[i]).collect(),
            mean_ctl: ctl.iter().sum::<f64>() / ctl.len() as f64,
            concepts: members,
            ctl,
        });
    }
    let tests = tiers[1..]
        .iter()
        .map(|other| {
            let n = other.ctl.len().min(tiers[0].ctl.len());
            Ok(TierTest {
                tier: other.name.clone(),
                test: paired_t_test(&tiers[0].ctl[..n], &other.ctl[..n])?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TierAnalysis { version: super::EXPORT_VERSION, tiers, tests })
}

/// `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

/// Correlation between per-concept task leakage and mean inter-concept leakage.
pub fn leakage_correlation(ctl: &[f64], icl_mean: &[f64]) -> Result<Correlation> {
    if ctl.len() != icl_mean.len() {
        return Err(Error::Shape(format!("{} CTL values vs {} ICL values", ctl.len(), icl_mean.len())));
    }
    if ctl.len() < 3 {
        return Err(Error::Argument(format!("correlation needs ≥ 3 values, got {}", ctl.len())));
    }
    Ok(Correlation {
        pearson: pearson(ctl, icl_mean),
        spearman: spearman(ctl, icl_mean),
    })
}
