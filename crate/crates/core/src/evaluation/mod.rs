//! Faithfulness metrics, statistics, intervention and plot exports.

mod intervention;
mod metrics;
mod plots;
mod report;
mod stats;

pub use intervention::{intervene, InterventionCurve};
pub use metrics::{accuracy, concept_rmse, ctl_metric, icl_metric, RmseSummary};
pub use plots::{activation_distributions, pareto_export, ParetoDoc, ParetoPoint, PlotDoc, Series};
pub use report::{evaluate, report_json, EvalConfig, FaithfulnessReport, REPORT_VERSION};
pub use stats::{
    leakage_correlation, paired_t_test, pearson, rmse_tier_analysis, spearman, Correlation, PairedT, Tier,
    TierAnalysis, TierTest,
};

/// Version of every JSON document this module writes.
pub const EXPORT_VERSION: u32 = 1;
