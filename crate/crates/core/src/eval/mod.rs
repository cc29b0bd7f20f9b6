//! Uncertainty metrics, baselines, ablations and timing.

mod methods;
mod metrics;
mod report;

pub use methods::{
    evaluate, evaluation_views, predict, run_ablation, run_method, run_sweep, train_method,
    unobserved_region_statistic, BaselineConfig, EvalConfig, Evaluation, MethodId, MetricReport,
    Prediction, TrainedMethod, ViewResult,
};
pub use metrics::{
    channel_means, floor_fraction, mse_uncertainty_correlation, nll_metric, pearson, spearman,
    CorrelationKind, VARIANCE_FLOOR,
};
pub use report::{read_reports_json, write_contact_sheet, write_reports_json};
