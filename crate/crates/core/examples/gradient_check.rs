//! Compares reverse-mode input gradients with central finite differences, and shows
//! how the deconvolution and guided ReLU rules change the backward pass.
//!
//! cargo run --release --example gradient_check

use attrib_bench::autodiff::{BackpropRule, CnnWidths, Model};
use attrib_bench::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> attrib_bench::Result<()> {
    let model = Model::small_cnn([1, 16, 16], 10, CnnWidths::desk(), 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor::new(vec![1, 16, 16], (0..256).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let class = 3;
    let (_, tape) = model.forward(&x)?;
    let g = model.backward(&tape, BackpropRule::Standard, class)?;

    let h = 1e-6;
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let v = x.data()[i];
        probe.data_mut()[i] = v + h;
        let up = model.logits(&probe)?.data()[class];
        probe.data_mut()[i] = v - h;
        let down = model.logits(&probe)?.data()[class];
        probe.data_mut()[i] = v;
        worst = worst.max(((up - down) / (2.0 * h) - g.data()[i]).abs());
    }
    println!("max |autodiff - finite difference| = {worst:.2e} (|g|_inf = {:.3})", g.linf_norm());

    for rule in [BackpropRule::Deconv, BackpropRule::Guided] {
        let r = model.backward(&tape, rule, class)?;
        let cos = r.dot(&g)? / (r.l2_norm() * g.l2_norm());
        println!("{rule:?}: cosine to the plain gradient {cos:.3}");
    }
    Ok(())
}
