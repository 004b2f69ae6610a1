//! Trains the small CNN on synthetic shapes, reports accuracy and round-trips the
//! weights through the binary container.
//!
//! cargo run --release --example train_model

use attrib_bench::autodiff::container::{load_model, save_model};
use attrib_bench::autodiff::{CnnWidths, Model};
use attrib_bench::data::{accuracy, synth_generate, train_sgd, TrainConfig};

fn main() -> attrib_bench::Result<()> {
    let raw = synth_generate(1, 2400, 28, 10)?;
    let (train, test) = raw.split_at(2000)?;
    let stats = train.fit_normalization()?;
    let (train, test) = (train.normalized(&stats)?, test.normalized(&stats)?);

    let init = Model::small_cnn([1, 28, 28], 10, CnnWidths::desk(), 0)?;
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.02,
        batch_size: 32,
        ..Default::default()
    };
    let (model, report) = train_sgd(&init, &train, &cfg)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {e}: loss {loss:.4}");
    }
    println!("test accuracy {:.3}", accuracy(&model, &test)?);

    let dir = std::env::temp_dir().join("attrib-bench-train-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("model.attb");
    save_model(&path, &model)?;
    let back = load_model(&path)?;
    println!("reloaded model identical: {}", back == model);
    Ok(())
}
