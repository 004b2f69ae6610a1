//! Datasets: IDX ingestion, synthetic shapes, normalization, training and cohort selection.

mod cohort;
mod dataset;
pub mod idx;
mod synth;
mod train;

pub use cohort::{select_cohort, Cohort};
pub use dataset::{Dataset, Normalization};
pub use idx::{load_idx, load_idx_raw, write_idx};
pub use synth::{synth_generate, ShapeClass};
pub use train::{accuracy, train_sgd, TrainConfig, TrainReport};
