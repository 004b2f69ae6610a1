//! Statistical analysis of per-image metric scores.

mod agreement;
mod correlation;
mod table;
mod wilcoxon;

pub use agreement::{cles, krippendorff_alpha, ordinal_alpha, stability_analysis, StabilityReport};
pub use correlation::{average_ranks, inter_metric_correlation, pearson, spearman, CorrelationMatrix};
pub use table::ScoreTable;
pub use wilcoxon::{
    significance_grid, wilcoxon_signed_rank, Alternative, GridCell, SignificanceGrid, TestOutcome,
    ALPHA,
};
