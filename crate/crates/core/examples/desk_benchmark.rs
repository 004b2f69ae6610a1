//! Desk benchmark on 28x28 IDX data: all fourteen methods, deletion and IROF metrics,
//! then the MoRF/LeRF and masker correlations.
//!
//! cargo run --release --example desk_benchmark [output-dir]

use std::path::PathBuf;

use attrib_bench::harness::{cmd_benchmark, presets};
use attrib_bench::stats::inter_metric_correlation;

fn main() -> attrib_bench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "desk-out".into()).into();
    let idx = presets::write_desk_idx(&out)?;
    let config = presets::desk_benchmark(&idx, &out.join("run"))?;
    let outcome = cmd_benchmark(&config, None)?;
    let corr = inter_metric_correlation(&outcome.tables, &["random"]);
    for (a, b) in [
        ("Del_MoRF/constant", "Del_LeRF/constant"),
        ("IROF_MoRF/constant", "IROF_LeRF/constant"),
        ("Del_MoRF/constant", "Del_MoRF/blur"),
    ] {
        println!("spearman {a} vs {b}: {:.3}", corr.get(a, b).unwrap_or(f64::NAN));
    }
    Ok(())
}
