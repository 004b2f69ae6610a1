//! Ready-made run configurations for the desk-scale studies.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{MaskerKind, MetricEntry, RunConfig};
use crate::data::{synth_generate, write_idx};
use crate::error::{Error, Result};
use crate::metrics::MetricId;

fn build(value: serde_json::Value) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_value(value)?;
    config.validate()?;
    Ok(config)
}

/// Writes 6000 training and 1000 test synthetic 28x28 shapes as IDX files under
/// `dir` and returns their paths (train images, train labels, test images, test labels).
pub fn write_desk_idx(dir: &Path) -> Result<[PathBuf; 4]> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ["train-images.idx", "train-labels.idx", "test-images.idx", "test-labels.idx"].map(|f| dir.join(f));
    let all = synth_generate(2024, 7000, 28, 10)?;
    let (train, test) = all.split_at(6000)?;
    write_idx(&train, &files[0], &files[1])?;
    write_idx(&test, &files[2], &files[3])?;
    Ok(files)
}

/// All fourteen methods on 28x28 IDX data, 64-image cohort; deletion with constant
/// and blur masking plus both IROF orders.
pub fn desk_benchmark(idx: &[PathBuf; 4], output_dir: &Path) -> Result<RunConfig> {
    build(json!({
        "dataset": {
            "kind": "idx",
            "train_images": idx[0], "train_labels": idx[1],
            "test_images": idx[2], "test_labels": idx[3]
        },
        "model": {"kind": "train", "train": {"epochs": 4, "learning_rate": 0.02, "batch_size": 32, "seed": 7}},
        "metrics": [
            {"metric": "Del_MoRF"}, {"metric": "Del_LeRF"}, {"metric": "Del_MoRF", "masker": "blur"},
            {"metric": "IROF_MoRF"}, {"metric": "IROF_LeRF"}
        ],
        "cohort_size": 64,
        "seed": 5,
        "output_dir": output_dir
    }))
}

/// Sensitivity-n and Seg-Sensitivity-n on 56x56 synthetic shapes, gradient attributions.
pub fn stability_study(output_dir: &Path) -> Result<RunConfig> {
    build(json!({
        "dataset": {"kind": "synthetic", "seed": 56, "train": 3000, "test": 400, "size": 56, "classes": 10},
        "model": {
            "kind": "train",
            "widths": {"conv1": 8, "conv2": 16, "hidden": 32, "first_stride": 2},
            "train": {"epochs": 4, "learning_rate": 0.02, "batch_size": 32, "seed": 3}
        },
        "metrics": [{"metric": "Sens_n"}, {"metric": "SegSens_n"}],
        "cohort_size": 64,
        "seed": 17,
        "output_dir": output_dir
    }))
}

/// The ground-region indicator against the random baseline on every type I metric,
/// constant masking, 28x28 synthetic shapes.
pub fn region_oracle(output_dir: &Path) -> Result<RunConfig> {
    let metrics: Vec<MetricEntry> = MetricId::ALL
        .iter()
        .filter(|m| m.is_type_one())
        .map(|&m| MetricEntry::new(m, MaskerKind::Constant))
        .collect();
    build(json!({
        "dataset": {"kind": "synthetic", "seed": 10, "train": 4000, "test": 400, "size": 28, "classes": 10},
        "model": {"kind": "train", "train": {"epochs": 4, "learning_rate": 0.02, "batch_size": 32, "seed": 2}},
        "methods": ["region_oracle"],
        "metrics": metrics,
        "cohort_size": 64,
        "seed": 23,
        "output_dir": output_dir
    }))
}
