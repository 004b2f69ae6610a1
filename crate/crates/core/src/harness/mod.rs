//! Config-driven benchmark workflow: train, attribute, pilot, benchmark, compare,
//! stability and report.

mod commands;
mod config;
mod pilot;
mod pipeline;
pub mod presets;
mod svg;

pub use commands::{
    cmd_attribute, cmd_benchmark, cmd_compare, cmd_pilot, cmd_report, cmd_stability, cmd_train, compare_tables,
    AttributionSummary, BenchmarkOutcome, BenchmarkReport, CompareReport, CompareRow, Exclusion, Manifest,
    PatchSummary, RunReport, SnrComparison, StabilityRow, StabilityStudy, TrainSummary, MIN_PILOT,
};
pub use config::{
    DatasetSpec, MaskerKind, MethodRef, MetricEntry, ModelSpec, RunConfig, StabilitySpec, OUTPUT_ROOT_ENV,
};
pub use pilot::{select_metrics, table_alphas, MetricDecision, PilotReport, Rationale, RedundantPair};
pub use pipeline::{
    attribution_key, compute_attributions, load_raw_datasets, prepare, read_scores, score_all, score_job,
    score_tables, tensor_digest, write_scores, AttributionStore, Bench, CohortImage, Prepared, ScoreRecord,
};
pub use svg::{cles_svg, grid_svg, stability_svg};
