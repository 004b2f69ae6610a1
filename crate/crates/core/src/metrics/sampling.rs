use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attribution::Explain;
use crate::autodiff::Model;
use crate::error::{Error, Result};
use crate::masking::{mask_pixels, mask_segment_set, Masker};
use crate::segmentation::{segment_attribution, Aggregation, Segmentation};
use crate::stats::pearson;
use crate::tensor::Tensor;

use super::{Flag, MetricResult};

fn correlation(sums: &[f64], drops: &[f64]) -> MetricResult {
    match pearson(sums, drops) {
        Some(r) => MetricResult::ok(r),
        None => MetricResult::flagged(f64::NAN, Flag::Degenerate),
    }
}

/// Pearson correlation between attribution sums and logit drops over `subsets`
/// random pixel sets of size `n`.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_n(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    n: usize,
    subsets: usize,
    masker: &Masker,
    seed: u64,
) -> Result<MetricResult> {
    e.check_same_shape(x)?;
    let (ch, h, w) = x.image_dims()?;
    let d = h * w;
    if n == 0 || n >= d {
        return Err(Error::shape(format!("sensitivity-n needs 1 <= n < {d}, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fill = masker.fill(x)?;
    let base = model.logits(x)?.data()[c];
    let ev = e.data();
    let mut sums = Vec::with_capacity(subsets);
    let mut drops = Vec::with_capacity(subsets);
    for _ in 0..subsets {
        let pixels = sample(&mut rng, d, n).into_vec();
        sums.push(pixels.iter().map(|&p| (0..ch).map(|k| ev[k * d + p]).sum::<f64>()).sum());
        drops.push(base - model.logits(&mask_pixels(x, &fill, &pixels))?.data()[c]);
    }
    Ok(correlation(&sums, &drops))
}

/// Sensitivity-n over random sets of `n` segments, using segment-mean attributions.
#[allow(clippy::too_many_arguments)]
pub fn seg_sensitivity_n(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    s: &Segmentation,
    n: usize,
    subsets: usize,
    masker: &Masker,
    seed: u64,
) -> Result<MetricResult> {
    e.check_same_shape(x)?;
    let l = s.count();
    if n == 0 || n >= l {
        return Err(Error::shape(format!("seg-sensitivity-n needs 1 <= n < {l}, got {n}")));
    }
    let scores = segment_attribution(e, s, Aggregation::Signed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fill = masker.fill(x)?;
    let base = model.logits(x)?.data()[c];
    let mut sums = Vec::with_capacity(subsets);
    let mut drops = Vec::with_capacity(subsets);
    for _ in 0..subsets {
        let segs = sample(&mut rng, l, n).into_vec();
        sums.push(segs.iter().map(|&k| scores[k]).sum());
        drops.push(base - model.logits(&mask_segment_set(x, &fill, s, &segs))?.data()[c]);
    }
    Ok(correlation(&sums, &drops))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// The perturbed input is pure Gaussian noise of this standard deviation.
    NoisyBaseline { sigma: f64 },
    /// A random square of this side is set to zero.
    Square { side: usize },
}

/// `E[(beta I.e - (f(x) - f(x - I)))^2]` with the least-squares `beta` of the same sample.
pub fn infidelity(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    perturbation: Perturbation,
    samples: usize,
    seed: u64,
) -> Result<MetricResult> {
    let (a, b) = infidelity_terms(model, x, e, c, perturbation, samples, seed)?;
    Ok(match optimal_scaling(&a, &b) {
        Some((_, infd)) => MetricResult::ok(infd),
        None => MetricResult::flagged(f64::NAN, Flag::Degenerate),
    })
}

/// `beta = sum(ab) / sum(a^2)` and the mean squared residual; `None` if `sum(a^2) = 0`.
pub fn optimal_scaling(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let saa: f64 = a.iter().map(|v| v * v).sum();
    if saa == 0.0 || !saa.is_finite() {
        return None;
    }
    let beta = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / saa;
    let infd = a.iter().zip(b).map(|(x, y)| (beta * x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Some((beta, infd))
}

/// Per-sample projections `I.e` and output drops `f(x) - f(x - I)`.
pub fn infidelity_terms(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    perturbation: Perturbation,
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    e.check_same_shape(x)?;
    if samples < 2 {
        return Err(Error::config("infidelity needs at least 2 samples"));
    }
    let (ch, h, w) = x.image_dims()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = model.logits(x)?.data()[c];
    let normal = match perturbation {
        Perturbation::NoisyBaseline { sigma } => {
            Some(Normal::new(0.0, sigma).map_err(|err| Error::config(err.to_string()))?)
        }
        Perturbation::Square { .. } => None,
    };
    let mut a = Vec::with_capacity(samples);
    let mut b = Vec::with_capacity(samples);
    for _ in 0..samples {
        let perturbed = match perturbation {
            Perturbation::NoisyBaseline { .. } => {
                let normal = normal.as_ref().expect("built above");
                let data = (0..x.len()).map(|_| normal.sample(&mut rng)).collect();
                Tensor::new(x.shape().to_vec(), data)?
            }
            Perturbation::Square { side } => {
                let side = side.clamp(1, h.min(w));
                let y0 = rng.random_range(0..=h - side);
                let x0 = rng.random_range(0..=w - side);
                let mut out = x.clone();
                let data = out.data_mut();
                for k in 0..ch {
                    for y in y0..y0 + side {
                        for xx in x0..x0 + side {
                            data[k * h * w + y * w + xx] = 0.0;
                        }
                    }
                }
                out
            }
        };
        a.push(x.sub(&perturbed)?.dot(e)?);
        b.push(base - model.logits(&perturbed)?.data()[c]);
    }
    Ok((a, b))
}

/// Largest L-infinity change of the unit-norm attribution under uniform input noise in `[-r, r]`.
pub fn max_sensitivity(
    explain: &dyn Explain,
    x: &Tensor,
    c: usize,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<MetricResult> {
    let unit = |m: Tensor| -> Option<Tensor> {
        let norm = m.l2_norm();
        (norm > 0.0 && norm.is_finite()).then(|| m.scale(1.0 / norm))
    };
    let Some(reference) = unit(explain.explain(x, c)?) else {
        return Ok(MetricResult::flagged(f64::NAN, Flag::Degenerate));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-radius..=radius));
        let Some(other) = unit(explain.explain(&y, c)?) else {
            return Ok(MetricResult::flagged(f64::NAN, Flag::Degenerate));
        };
        worst = worst.max(reference.sub(&other)?.linf_norm());
    }
    Ok(MetricResult::ok(worst))
}
