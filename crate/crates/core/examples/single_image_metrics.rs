//! Scores one gradient map and one random map with every metric family directly,
//! without the harness.
//!
//! cargo run --release --example single_image_metrics

use attrib_bench::attribution::{Explainer, Method, MethodConfig};
use attrib_bench::autodiff::{CnnWidths, Model};
use attrib_bench::data::{select_cohort, synth_generate, train_sgd, TrainConfig};
use attrib_bench::masking::{Masker, Order};
use attrib_bench::metrics::{
    deletion, infidelity, insertion, irof, max_sensitivity, minimal_subset, seg_sensitivity_n, sensitivity_n,
    MinimalSubsetMode, Perturbation,
};
use attrib_bench::segmentation::{slic, SlicParams};

fn main() -> attrib_bench::Result<()> {
    let raw = synth_generate(5, 1700, 28, 10)?;
    let (train, test) = raw.split_at(1500)?;
    let stats = train.fit_normalization()?;
    let (train, test) = (train.normalized(&stats)?, test.normalized(&stats)?);
    let init = Model::small_cnn([1, 28, 28], 10, CnnWidths::desk(), 0)?;
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.02,
        batch_size: 32,
        ..Default::default()
    };
    let (m, _) = train_sgd(&init, &train, &cfg)?;
    let cohort = select_cohort(&m, &test, 1)?;
    let (x, c) = (test.image(cohort.indices[0]), cohort.predicted[0]);
    let s = slic(&x, &SlicParams::with_target(100))?;
    let ex = Explainer::new(&m, MethodConfig::default());
    let mean = Masker::DatasetMean;
    let d = 28 * 28;

    println!("{:<14} {:>10} {:>10}", "metric", "gradient", "random");
    for (name, higher) in [
        ("Del_MoRF", false),
        ("Del_LeRF", true),
        ("Ins_MoRF", true),
        ("IROF_MoRF", false),
        ("MS_Del", false),
        ("Sens_n", true),
        ("SegSens_n", true),
        ("INFD_NB", false),
        ("SENS_MAX", false),
    ] {
        let mut row = Vec::new();
        for method in [Method::Gradient, Method::Random] {
            let e = ex.explain(method, &x, c, 1)?.values;
            let score = match name {
                "Del_MoRF" => deletion(&m, &x, &e, c, Order::MoRF, &mean, 15, 0.15)?,
                "Del_LeRF" => deletion(&m, &x, &e, c, Order::LeRF, &mean, 15, 0.15)?,
                "Ins_MoRF" => insertion(&m, &x, &e, c, Order::MoRF, &mean, 15, 0.15)?,
                "IROF_MoRF" => irof(&m, &x, &e, c, Order::MoRF, &mean, &s)?,
                "MS_Del" => minimal_subset(&m, &x, &e, MinimalSubsetMode::Deletion, &mean, None)?.score,
                "Sens_n" => sensitivity_n(&m, &x, &e, c, d / 10, 100, &mean, 2)?.score,
                "SegSens_n" => seg_sensitivity_n(&m, &x, &e, c, &s, s.count() / 10, 100, &mean, 2)?.score,
                "INFD_NB" => infidelity(&m, &x, &e, c, Perturbation::NoisyBaseline { sigma: 0.2 }, 500, 2)?.score,
                _ => max_sensitivity(&ex.bind(method, 1), &x, c, 0.1, 20, 2)?.score,
            };
            row.push(score);
        }
        let arrow = if higher { "higher is better" } else { "lower is better" };
        println!("{name:<14} {:>10.4} {:>10.4}   ({arrow})", row[0], row[1]);
    }
    Ok(())
}
