use rand::seq::index::sample;
use rand::Rng;

use crate::autodiff::Model;
use crate::error::{Error, Result};
use crate::masking::mask_segment_set;
use crate::segmentation::Segmentation;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateMode {
    Lime,
    KernelShap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub samples: usize,
    pub ridge: f64,
    /// LIME proximity kernel width on cosine distance.
    pub kernel_width: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            samples: 300,
            ridge: 1e-6,
            kernel_width: 0.25,
        }
    }
}

/// Fits a weighted linear surrogate over segment coalitions and returns one
/// coefficient per segment. Absent segments are copied from `fill`.
pub fn surrogate_coefficients(
    model: &Model,
    x: &Tensor,
    c: usize,
    mode: SurrogateMode,
    s: &Segmentation,
    fill: &Tensor,
    params: &SurrogateParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let l = s.count();
    if params.samples < l + 2 {
        return Err(Error::config(format!(
            "{} surrogate samples for {l} segments; need at least {}",
            params.samples,
            l + 2
        )));
    }
    let value = |z: &[bool]| -> Result<f64> {
        let absent: Vec<usize> = (0..l).filter(|&i| !z[i]).collect();
        let img = mask_segment_set(x, fill, s, &absent);
        Ok(model.logits(&img)?.data()[c])
    };
    match mode {
        SurrogateMode::KernelShap => kernel_shap(l, value, params, rng),
        SurrogateMode::Lime => lime(l, value, params, rng),
    }
}

/// Broadcasts per-segment coefficients to every pixel and channel.
pub fn broadcast(coefficients: &[f64], s: &Segmentation, shape: &[usize]) -> Result<Tensor> {
    let mut out = Tensor::zeros(shape);
    let (c, h, w) = out.image_dims()?;
    if (h, w) != (s.height(), s.width()) {
        return Err(Error::shape("segmentation does not match the input"));
    }
    let d = h * w;
    let data = out.data_mut();
    for (p, &lab) in s.labels().iter().enumerate() {
        for ch in 0..c {
            data[ch * d + p] = coefficients[lab];
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn shapley_kernel(l: usize, size: usize) -> f64 {
    (l - 1) as f64 / (binomial(l, size) * size as f64 * (l - size) as f64)
}

/// Coalition `index` as a membership vector over `l` players.
fn bits(index: u64, l: usize) -> Vec<bool> {
    (0..l).map(|i| index >> i & 1 == 1).collect()
}

/// Shapley-kernel WLS with the efficiency constraint imposed exactly.
/// Enumerates every coalition when the budget allows, else samples sizes by kernel mass.
fn kernel_shap(
    l: usize,
    value: impl Fn(&[bool]) -> Result<f64>,
    params: &SurrogateParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let empty = value(&vec![false; l])?;
    let full = value(&vec![true; l])?;
    let total = full - empty;
    if l == 1 {
        return Ok(vec![total]);
    }
    let mut coalitions: Vec<(Vec<bool>, f64)> = Vec::new();
    let exhaustive = l < 63 && (1u64 << l) - 2 <= params.samples as u64;
    if exhaustive {
        for index in 1..(1u64 << l) - 1 {
            let z = bits(index, l);
            let size = z.iter().filter(|&&b| b).count();
            coalitions.push((z, shapley_kernel(l, size)));
        }
    } else {
        let mass: Vec<f64> = (1..l).map(|k| 1.0 / (k * (l - k)) as f64).collect();
        let total_mass: f64 = mass.iter().sum();
        for _ in 0..params.samples {
            let mut u = rng.random::<f64>() * total_mass;
            let mut size = l - 1;
            for (i, m) in mass.iter().enumerate() {
                if u < *m {
                    size = i + 1;
                    break;
                }
                u -= m;
            }
            let mut z = vec![false; l];
            for i in sample(rng, l, size) {
                z[i] = true;
            }
            coalitions.push((z, 1.0));
        }
    }
    // Substitute phi_last = total - sum(others) and regress on the remaining l - 1.
    let last = l - 1;
    let mut rows = Vec::with_capacity(coalitions.len());
    let mut targets = Vec::with_capacity(coalitions.len());
    let mut weights = Vec::with_capacity(coalitions.len());
    for (z, wt) in &coalitions {
        let zl = f64::from(u8::from(z[last]));
        rows.push((0..last).map(|i| f64::from(u8::from(z[i])) - zl).collect::<Vec<_>>());
        targets.push(value(z)? - empty - zl * total);
        weights.push(*wt);
    }
    let mut phi = weighted_least_squares(&rows, &targets, &weights, params.ridge, &vec![true; last])?;
    let rest: f64 = phi.iter().sum();
    phi.push(total - rest);
    Ok(phi)
}

/// LIME: Bernoulli(1/2) coalitions plus the full one, exponential cosine kernel,
/// ridge-regularized WLS with an unpenalized intercept.
fn lime(
    l: usize,
    value: impl Fn(&[bool]) -> Result<f64>,
    params: &SurrogateParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut rows = Vec::with_capacity(params.samples);
    let mut targets = Vec::with_capacity(params.samples);
    let mut weights = Vec::with_capacity(params.samples);
    for i in 0..params.samples {
        let z: Vec<bool> = if i == 0 {
            vec![true; l]
        } else {
            (0..l).map(|_| rng.random::<bool>()).collect()
        };
        let active = z.iter().filter(|&&b| b).count();
        let distance = 1.0 - (active as f64 / l as f64).sqrt();
        weights.push((-(distance * distance) / (params.kernel_width * params.kernel_width)).exp());
        let mut row: Vec<f64> = z.iter().map(|&b| f64::from(u8::from(b))).collect();
        row.push(1.0);
        rows.push(row);
        targets.push(value(&z)?);
    }
    let mut penalize = vec![true; l];
    penalize.push(false);
    let mut coef = weighted_least_squares(&rows, &targets, &weights, params.ridge, &penalize)?;
    coef.pop();
    Ok(coef)
}

/// Solves `(X^T W X + ridge * P) b = X^T W y` by Cholesky, `P` the penalty mask.
pub(crate) fn weighted_least_squares(
    rows: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    ridge: f64,
    penalize: &[bool],
) -> Result<Vec<f64>> {
    let p = penalize.len();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for ((row, &yi), &wi) in rows.iter().zip(y).zip(w) {
        for i in 0..p {
            let ri = wi * row[i];
            b[i] += ri * yi;
            for j in 0..=i {
                a[i * p + j] += ri * row[j];
            }
        }
    }
    for i in 0..p {
        if penalize[i] {
            a[i * p + i] += ridge;
        }
    }
    let scale = (0..p).map(|i| a[i * p + i]).fold(0.0, f64::max);
    // Lower-triangular Cholesky in place.
    for j in 0..p {
        let mut diag = a[j * p + j];
        for k in 0..j {
            diag -= a[j * p + k] * a[j * p + k];
        }
        if !(diag > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::IllConditioned(format!(
                "normal equations singular at coefficient {j}"
            )));
        }
        let diag = diag.sqrt();
        a[j * p + j] = diag;
        for i in j + 1..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = v / diag;
        }
    }
    for i in 0..p {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * p + k] * b[k];
        }
        b[i] = v / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut v = b[i];
        for k in i + 1..p {
            v -= a[k * p + i] * b[k];
        }
        b[i] = v / a[i * p + i];
    }
    Ok(b)
}
