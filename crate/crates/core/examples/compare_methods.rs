//! Head-to-head comparison of two methods: per-metric CLES and signed-rank p.
//!
//! cargo run --release --example compare_methods [output-dir]

use std::path::PathBuf;

use attrib_bench::harness::{cmd_compare, RunConfig};

fn main() -> attrib_bench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "compare-out".into()).into();
    let config: RunConfig = serde_json::from_value(serde_json::json!({
        "dataset": {"kind": "synthetic", "seed": 8, "train": 2000, "test": 300, "size": 28, "classes": 10},
        "model": {"kind": "train", "train": {"epochs": 3, "learning_rate": 0.02, "batch_size": 32, "seed": 0}},
        "methods": ["integrated_gradients", "smooth_grad"],
        "method_config": {"noise_samples": 16},
        "metrics": [
            {"metric": "Del_MoRF"}, {"metric": "Del_MoRF", "masker": "blur"}, {"metric": "Ins_MoRF"},
            {"metric": "IROF_MoRF"}, {"metric": "Sens_n"}
        ],
        "cohort_size": 48,
        "seed": 6,
        "output_dir": out
    }))?;
    let report = cmd_compare(&config, "integrated_gradients", "smooth_grad", None)?;
    println!("{} vs {}", report.a, report.b);
    for r in &report.rows {
        let p = r.p_value.map_or("n/a".to_string(), |p| format!("{p:.2e}"));
        println!("{:<20} CLES {:.3}  p {p:<10} {}", r.metric, r.cles, if r.significant { "significant" } else { "" });
    }
    Ok(())
}
