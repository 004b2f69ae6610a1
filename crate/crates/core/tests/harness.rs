use std::path::Path;
use std::process::Command;

use attrib_bench::harness::{
    cmd_benchmark, cmd_compare, cmd_pilot, cmd_report, cmd_stability, cmd_train, compare_tables, read_scores,
    MetricEntry, RunConfig, OUTPUT_ROOT_ENV,
};
use attrib_bench::Error;
use serde_json::{json, Value};

fn base(out: &Path) -> Value {
    json!({
        "dataset": {"kind": "synthetic", "seed": 3, "train": 500, "test": 120, "size": 16, "classes": 4},
        "model": {"kind": "train", "train": {"epochs": 2, "learning_rate": 0.02, "batch_size": 32, "seed": 1}},
        "methods": ["gradient", "input_x_gradient", "smooth_grad"],
        "method_config": {"noise_samples": 4},
        "metrics": [
            {"metric": "Del_MoRF"}, {"metric": "Del_LeRF", "masker": "uniform"},
            {"metric": "IROF_MoRF", "masker": "blur"}, {"metric": "Sens_n"}, {"metric": "INFD_NB"}
        ],
        "reference_pool": 16,
        "cohort_size": 12,
        "pilot_size": 12,
        "seed": 8,
        "output_dir": out
    })
}

fn config(v: Value) -> RunConfig {
    RunConfig::from_json(&v.to_string()).unwrap()
}

fn with(mut v: Value, key: &str, value: Value) -> Value {
    v[key] = value;
    v
}

#[test]
fn baseline_alone_is_never_significant() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(with(base(dir.path()), "methods", json!(["random"])));
    let o = cmd_benchmark(&c, None).unwrap();
    assert!(o.report.grid.cells.iter().all(|c| c.outcome.as_ref().is_none_or(|x| !x.significant)));
    assert_eq!(o.report.grid.methods, vec!["random"]);
}

#[test]
fn reruns_reuse_caches_and_reproduce_scores() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(base(dir.path()));
    cmd_benchmark(&c, None).unwrap();
    let first = std::fs::read(dir.path().join("scores.csv")).unwrap();
    let cached = std::fs::read(dir.path().join("attributions.attb")).unwrap();
    cmd_benchmark(&c, None).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join("scores.csv")).unwrap());
    assert_eq!(cached, std::fs::read(dir.path().join("attributions.attb")).unwrap());

    // report rebuilds from the CSV alone
    let r = cmd_report(&c).unwrap();
    assert_eq!(r.grid.metrics.len(), 5);
    assert!(dir.path().join("report.md").exists());
}

#[test]
fn every_configured_metric_is_scored_or_explained() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(with(
        base(dir.path()),
        "metrics",
        json!([{"metric": "Del_MoRF"}, {"metric": "COV"}, {"metric": "MS_Ins"}, {"metric": "SENS_MAX"}]),
    ));
    let o = cmd_benchmark(&c, None).unwrap();
    for key in c.metric_entries().iter().map(MetricEntry::key) {
        let scored = o.report.grid.metrics.contains(&key);
        let explained = o.report.exclusions.iter().any(|e| e.metric == key);
        assert!(scored || explained, "{key} silently dropped");
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["metrics"].as_array().unwrap().len(), 4);
    assert!(manifest["attribution_digests"].as_object().is_some_and(|m| !m.is_empty()));
}

#[test]
fn comparisons_mirror() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(base(dir.path()));
    let o = cmd_benchmark(&c, None).unwrap();
    let ab = compare_tables(&o.tables, "gradient", "smooth_grad").unwrap();
    let ba = compare_tables(&o.tables, "smooth_grad", "gradient").unwrap();
    for (x, y) in ab.rows.iter().zip(&ba.rows) {
        assert!((x.cles + y.cles - 1.0).abs() < 1e-12);
        assert_eq!(x.p_value, y.p_value);
    }
    let same = compare_tables(&o.tables, "gradient", "gradient").unwrap();
    assert!(same.rows.iter().all(|r| !r.significant && r.cles == 0.5));

    let report = cmd_compare(&c, "gradient", "random", None).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert!(dir.path().join("compare_gradient_random.svg").exists());
}

#[test]
fn pilot_selects_and_benchmark_follows() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(base(dir.path()));
    assert!(matches!(cmd_pilot(&c, Some(5)), Err(Error::Config(_))));
    let p = cmd_pilot(&c, None).unwrap();
    assert_eq!(p.decisions.len(), 5);
    assert!(!p.selected().is_empty());
    let o = cmd_benchmark(&c, None).unwrap();
    assert_eq!(o.report.grid.metrics, p.selected());
    let records = read_scores(&dir.path().join("pilot_scores.csv")).unwrap();
    assert!(!records.is_empty());
}

#[test]
fn stability_preconditions() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(with(base(dir.path()), "cohort_size", json!(6)));
    assert!(matches!(cmd_stability(&c, None, Some(1)), Err(Error::Config(_))));
    let del: Vec<MetricEntry> = vec!["Del_MoRF".parse().unwrap()];
    assert!(matches!(cmd_stability(&c, Some(del), Some(4)), Err(Error::Config(_))));
    let sens: Vec<MetricEntry> = vec!["Sens_n".parse().unwrap(), "INFD_NB".parse().unwrap()];
    let s = cmd_stability(&c, Some(sens), Some(4)).unwrap();
    assert_eq!(s.rows.len(), 2);
    assert!(s.rows.iter().all(|r| (0.0..=1.0).contains(&r.noise_fraction)));
}

#[test]
fn train_reuses_cached_model() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(base(dir.path()));
    let a = cmd_train(&c).unwrap();
    let b = cmd_train(&c).unwrap();
    assert_eq!(a.model_digest, b.model_digest);
    assert!(a.test_accuracy > 0.25);
}

fn cli(args: &[&str], root: Option<&Path>) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_attrib-bench"));
    cmd.args(args);
    match root {
        Some(r) => cmd.env(OUTPUT_ROOT_ENV, r),
        None => cmd.env_remove(OUTPUT_ROOT_ENV),
    };
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn cli_exit_codes_and_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    assert_eq!(cli(&["-c", missing.to_str().unwrap(), "train"], None).0, 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, with(base(dir.path()), "colour", json!("blue")).to_string()).unwrap();
    assert_eq!(cli(&["-c", bad.to_str().unwrap(), "train"], None).0, 2);

    let no_data = dir.path().join("idx.json");
    let idx = json!({"kind": "idx", "train_images": "/nonexistent/a", "train_labels": "/nonexistent/b",
                     "test_images": "/nonexistent/c", "test_labels": "/nonexistent/d"});
    std::fs::write(&no_data, with(base(dir.path()), "dataset", idx).to_string()).unwrap();
    assert_eq!(cli(&["-c", no_data.to_str().unwrap(), "train"], None).0, 3);

    let relative = dir.path().join("relative.json");
    std::fs::write(&relative, with(base(dir.path()), "output_dir", json!("runs/a")).to_string()).unwrap();
    let (code, err) = cli(&["-c", relative.to_str().unwrap(), "train"], Some(dir.path()));
    assert_eq!(code, 0, "{err}");
    assert!(dir.path().join("runs/a/train.json").exists());
}
