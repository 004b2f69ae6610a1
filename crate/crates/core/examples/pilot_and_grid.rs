//! Pilot metric selection followed by a benchmark on the selected metrics, printing
//! the significance grid against the random baseline.
//!
//! cargo run --release --example pilot_and_grid [output-dir]

use std::path::PathBuf;

use attrib_bench::harness::{cmd_benchmark, cmd_pilot, RunConfig};

fn main() -> attrib_bench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "pilot-out".into()).into();
    let config: RunConfig = serde_json::from_value(serde_json::json!({
        "dataset": {"kind": "synthetic", "seed": 21, "train": 2000, "test": 300, "size": 28, "classes": 10},
        "model": {"kind": "train", "train": {"epochs": 3, "learning_rate": 0.02, "batch_size": 32, "seed": 0}},
        "methods": ["gradient", "input_x_gradient", "integrated_gradients", "grad_cam", "deep_lift"],
        "metrics": [
            {"metric": "Del_MoRF"}, {"metric": "Del_LeRF"}, {"metric": "Ins_MoRF"}, {"metric": "Ins_LeRF"},
            {"metric": "IROF_MoRF"}, {"metric": "IROF_LeRF"}, {"metric": "INFD_SQ"}
        ],
        "metric_params": {"infidelity_samples": 200},
        "cohort_size": 48,
        "pilot_size": 24,
        "seed": 4,
        "output_dir": out
    }))?;
    let pilot = cmd_pilot(&config, None)?;
    for d in &pilot.decisions {
        let alpha = d.alpha.map_or("undefined".to_string(), |a| format!("{a:.3}"));
        println!("{:<20} alpha {alpha:<9} {}", d.metric, d.rationale);
    }
    let outcome = cmd_benchmark(&config, None)?;
    let grid = &outcome.report.grid;
    print!("{:<22}", "");
    for m in &grid.metrics {
        print!("{:>20}", m);
    }
    println!();
    for method in &grid.methods {
        print!("{method:<22}");
        for m in &grid.metrics {
            let cell = grid.cell(m, method).and_then(|c| c.outcome.as_ref());
            let text = match cell {
                Some(o) if o.significant => format!("{:.2}", o.normalized_effect.unwrap_or(0.0)),
                Some(_) => "-".into(),
                None => "n/a".into(),
            };
            print!("{text:>20}");
        }
        println!();
    }
    println!("grid.svg and manifest.json written to {}", out.display());
    Ok(())
}
