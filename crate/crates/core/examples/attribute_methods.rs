//! Runs all fourteen attribution methods plus the two baselines on one correctly
//! classified image, and reports how much of each map's top 10% falls on the shape.
//!
//! cargo run --release --example attribute_methods

use attrib_bench::attribution::{Explainer, Method, MethodConfig};
use attrib_bench::autodiff::{CnnWidths, Model};
use attrib_bench::data::{select_cohort, synth_generate, train_sgd, TrainConfig};
use attrib_bench::masking::rank_pixels;
use attrib_bench::Tensor;

fn main() -> attrib_bench::Result<()> {
    let raw = synth_generate(12, 1700, 28, 10)?;
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
    let (model, _) = train_sgd(&init, &train, &cfg)?;

    let cohort = select_cohort(&model, &test, 1)?;
    let i = cohort.indices[0];
    let (x, class) = (test.image(i), cohort.predicted[0]);
    let region = test.region(i).expect("synthetic regions");
    let refs: Vec<Tensor> = (0..32).map(|j| train.image(j)).collect();
    let explainer = Explainer::new(&model, MethodConfig::default()).with_references(&refs);

    let top = region.len() / 10;
    let methods = Method::ALL.iter().chain(&[Method::Random, Method::Edge]);
    for &method in methods {
        let map = explainer.explain(method, &x, class, 0)?;
        let ranking = rank_pixels(&map.values);
        let hits = ranking.top(top).iter().filter(|&&p| region[p]).count();
        println!("{:<22} top-10% on shape {:>5.1}%", method.id(), 100.0 * hits as f64 / top as f64);
    }
    Ok(())
}
