#![allow(dead_code)]

use attrib_bench::autodiff::{CnnWidths, Layer, Model};
use attrib_bench::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Central finite differences of `f` at `x`, one coordinate at a time.
pub fn finite_difference(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    let mut out = vec![0.0; x.len()];
    let mut probe = x.clone();
    for (i, o) in out.iter_mut().enumerate() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        *o = (up - down) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// `max |a - b| / max |b|`, the norm-wise relative error against the oracle `b`.
pub fn max_rel_error(a: &Tensor, b: &Tensor) -> f64 {
    let num = a
        .data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    num / b.linf_norm().max(1e-12)
}

/// Random 2-conv + dense CNN with small random biases so ReLU kinks are generic.
pub fn random_cnn(seed: u64, input: [usize; 3], classes: usize) -> Model {
    let widths = CnnWidths {
        conv1: 4,
        conv2: 6,
        hidden: 12,
        kernel: 3,
        first_stride: 1,
    };
    let m = Model::small_cnn(input, classes, widths, seed).unwrap();
    jitter_biases(m, seed)
}

pub fn jitter_biases(model: Model, seed: u64) -> Model {
    let mut r = rng(seed ^ 0xb1a5);
    let layers = model
        .layers()
        .iter()
        .cloned()
        .map(|l| match l {
            Layer::Dense { weight, bias } => Layer::Dense {
                bias: random_tensor(&mut r, bias.shape(), 0.1),
                weight,
            },
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => Layer::Conv2d {
                bias: random_tensor(&mut r, bias.shape(), 0.1),
                weight,
                stride,
                padding,
            },
            other => other,
        })
        .collect();
    Model::new(model.input_shape().to_vec(), layers).unwrap()
}

/// Linear model `f(x) = w·x` over a `(1, h, w)` image.
pub fn linear_image_model(weights: &[f64], h: usize, w: usize) -> Model {
    let layers = vec![
        Layer::Flatten,
        Layer::Dense {
            weight: Tensor::new(vec![1, h * w], weights.to_vec()).unwrap(),
            bias: Tensor::zeros(&[1]),
        },
    ];
    Model::new(vec![1, h, w], layers).unwrap()
}

/// Average ranks (1-based) by counting, O(n^2) and independent of the library.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// One-sided signed-rank p by enumerating every sign assignment of the ranked
/// non-zero `|a - b|`: P(W+ >= observed) for `greater`, P(W+ <= observed) otherwise.
pub fn brute_force_wilcoxon(a: &[f64], b: &[f64], greater: bool) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let doubled: Vec<u64> = naive_ranks(&abs).iter().map(|r| (2.0 * r).round() as u64).collect();
    let observed: u64 = d.iter().zip(&doubled).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
        if (greater && w >= observed) || (!greater && w <= observed) {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
