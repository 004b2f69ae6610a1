//! Significance grid sanity check: the ground-region indicator of synthetic shapes
//! against the uniform-random baseline on every type I metric.
//!
//! cargo run --release --example region_oracle [output-dir]

use std::path::PathBuf;

use attrib_bench::harness::{cmd_benchmark, presets};

fn main() -> attrib_bench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "oracle-out".into()).into();
    let outcome = cmd_benchmark(&presets::region_oracle(&out)?, None)?;
    let grid = &outcome.report.grid;
    let mut wins = 0;
    for metric in &grid.metrics {
        let p = grid
            .cell(metric, "region_oracle")
            .and_then(|c| c.outcome.as_ref())
            .map_or(f64::NAN, |o| o.p_value);
        let sig = grid.is_significant(metric, "region_oracle");
        wins += usize::from(sig);
        println!("{metric:<20} p = {p:<12.3e} {}", if sig { "significant" } else { "-" });
    }
    println!("oracle significant on {wins} of {} metrics", grid.metrics.len());
    let self_sig = grid.metrics.iter().any(|m| grid.is_significant(m, "random"));
    println!("random significant against itself: {self_sig}");
    Ok(())
}
