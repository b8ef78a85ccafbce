//! Metrics, cross-validation splits, and report files.

mod metrics;
mod report;
mod splits;

pub use metrics::{
    aggregate_fusion_weights, bhattacharyya, distribution_overlap, field_aggregate, field_overlaps, histogram, metrics,
    metrics_vs_mean, split_metrics, FieldMean, Metrics, OVERLAP_BINS,
};
pub use report::{coverage_csv, fusion_weights_csv, EvalReport, Level, LevelSummary, MeanStd, MetricRow};
pub use splits::{
    coverage_split, loyo_split, stratified_group_kfold, CoverageSplit, Fold, SplitKind, SplitPlan, LOW_COVERAGE_RANK,
};
