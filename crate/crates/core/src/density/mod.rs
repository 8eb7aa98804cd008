//! Information estimators.
//!
//! [`kde_mi`] is the differentiable leave-one-out KDE estimate of the mutual
//! information between a continuous variable and a discrete label; its
//! gradient drives the leakage loss. [`binned_mi`] is the plug-in estimator
//! used for concept-concept quantities, where differentiability is not needed
//! and non-negativity is.

mod binned;
mod kde;
mod leakage;

pub use binned::{binned_mi, discrete_entropy, BinnedConfig, BinnedMi};
pub use kde::{
    gaussian_kernel, kde_conditional_density, kde_marginal_density, kde_mi, kde_mi_backward,
    kde_mi_with_grad, resolve_bandwidth, scott_bandwidth, BandwidthRule, KdeConfig,
};
pub use leakage::{ctl_loss, leakage_loss_batch, LeakageOutcome};

/// Groups sample indices by label. Returns `(label, members)` sorted by label.
pub(crate) fn class_members(y: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &label) in y.iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }
    groups.into_iter().collect()
}
