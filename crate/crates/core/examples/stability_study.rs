//! Seg-Sensitivity-n against Sensitivity-n: per-image SNR and noise fraction over
//! repeated evaluations on 56x56 synthetic images.
//!
//! cargo run --release --example stability_study [output-dir] [repeats]

use std::path::PathBuf;

use attrib_bench::harness::{cmd_stability, presets};

fn main() -> attrib_bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().unwrap_or_else(|| "stability-out".into()).into();
    let repeats: usize = args.next().map_or(100, |r| r.parse().expect("repeats"));
    let config = presets::stability_study(&out)?;
    let study = cmd_stability(&config, None, Some(repeats))?;
    for r in &study.rows {
        println!("{:<20} median SNR {:>10.3}  noise fraction {:.4}", r.metric, r.median_snr, r.noise_fraction);
    }
    if let Some(c) = study.comparison("SegSens_n/constant", "Sens_n/constant") {
        println!("one-sided Wilcoxon SegSens > Sens: p = {:.3e}", c.p_value.unwrap_or(f64::NAN));
    }
    Ok(())
}
