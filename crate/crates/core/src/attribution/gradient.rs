use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{BackpropRule, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The four single-pass backprop explanations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackpropVariant {
    Gradient,
    InputXGradient,
    Deconvolution,
    Guided,
}

pub fn modified_backprop(model: &Model, x: &Tensor, c: usize, variant: BackpropVariant) -> Result<Tensor> {
    let (_, tape) = model.forward(x)?;
    let rule = match variant {
        BackpropVariant::Gradient | BackpropVariant::InputXGradient => BackpropRule::Standard,
        BackpropVariant::Deconvolution => BackpropRule::Deconv,
        BackpropVariant::Guided => BackpropRule::Guided,
    };
    let g = model.backward(&tape, rule, c)?;
    match variant {
        BackpropVariant::InputXGradient => g.mul(x),
        _ => Ok(g),
    }
}

fn gradient(model: &Model, x: &Tensor, c: usize) -> Result<Tensor> {
    let (_, tape) = model.forward(x)?;
    model.backward(&tape, BackpropRule::Standard, c)
}

/// Midpoint-rule path integral from `baseline` to `x`.
pub fn integrated_gradients(
    model: &Model,
    x: &Tensor,
    c: usize,
    baseline: &Tensor,
    steps: usize,
) -> Result<Tensor> {
    if steps < 2 {
        return Err(Error::config(format!("integrated gradients needs n >= 2, got {steps}")));
    }
    let delta = x.sub(baseline)?;
    let mut acc = Tensor::zeros(x.shape());
    for i in 0..steps {
        let alpha = (i as f64 + 0.5) / steps as f64;
        let point = baseline.zip_with(&delta, |b, d| b + alpha * d)?;
        acc.add_assign(&gradient(model, &point, c)?)?;
    }
    acc.scale(1.0 / steps as f64).mul(&delta)
}

/// Monte-Carlo expectation of single-point IG over (reference, alpha) draws.
pub fn expected_gradients(
    model: &Model,
    x: &Tensor,
    c: usize,
    references: &[Tensor],
    draws: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if references.is_empty() || draws == 0 {
        return Err(Error::config("expected gradients needs references and at least one draw"));
    }
    let mut acc = Tensor::zeros(x.shape());
    for _ in 0..draws {
        let r = &references[rng.random_range(0..references.len())];
        let alpha: f64 = rng.random();
        let delta = x.sub(r)?;
        let point = r.zip_with(&delta, |b, d| b + alpha * d)?;
        acc.add_assign(&gradient(model, &point, c)?.mul(&delta)?)?;
    }
    Ok(acc.scale(1.0 / draws as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    SmoothGrad,
    VarGrad,
}

/// Mean (SmoothGrad) or per-element sample variance (VarGrad) of gradients at
/// `x + N(0, sigma^2)`.
pub fn noise_ensemble(
    model: &Model,
    x: &Tensor,
    c: usize,
    mode: NoiseMode,
    samples: usize,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let min_samples = if mode == NoiseMode::VarGrad { 2 } else { 1 };
    if samples < min_samples {
        return Err(Error::config(format!("{mode:?} needs at least {min_samples} samples")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::config("noise level must be non-negative"));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut sum = Tensor::zeros(x.shape());
    let mut sum_sq = Tensor::zeros(x.shape());
    for _ in 0..samples {
        let mut noisy = x.clone();
        noisy.data_mut().iter_mut().for_each(|v| *v += normal.sample(rng));
        let g = gradient(model, &noisy, c)?;
        if mode == NoiseMode::VarGrad {
            sum_sq.add_assign(&g.map(|v| v * v))?;
        }
        sum.add_assign(&g)?;
    }
    let n = samples as f64;
    let mean = sum.scale(1.0 / n);
    match mode {
        NoiseMode::SmoothGrad => Ok(mean),
        NoiseMode::VarGrad => mean.zip_with(&sum_sq, |m, s| ((s - n * m * m) / (n - 1.0)).max(0.0)),
    }
}

/// Grad-CAM on the last convolution output, optionally multiplied by guided backprop.
pub fn cam(model: &Model, x: &Tensor, c: usize, guided: bool) -> Result<Tensor> {
    let conv = model
        .last_conv()
        .ok_or_else(|| Error::Unsupported("Grad-CAM needs a conv2d layer".into()))?;
    let (_, tape) = model.forward(x)?;
    let index = conv + 1;
    let grads = model.grad_at_layer(&tape, BackpropRule::Standard, c, index)?;
    let act = tape.activation(index).expect("index checked by grad_at_layer");
    let (k, fh, fw) = act.image_dims()?;
    let plane = fh * fw;
    let mut heat = vec![0.0; plane];
    for ch in 0..k {
        let g = &grads.data()[ch * plane..(ch + 1) * plane];
        let weight = g.iter().sum::<f64>() / plane as f64;
        for (h, a) in heat.iter_mut().zip(&act.data()[ch * plane..(ch + 1) * plane]) {
            *h += weight * a;
        }
    }
    heat.iter_mut().for_each(|v| *v = v.max(0.0));
    let (ic, ih, iw) = x.image_dims()?;
    let up = bilinear(&heat, fh, fw, ih, iw);
    let mut data = Vec::with_capacity(ic * ih * iw);
    for _ in 0..ic {
        data.extend_from_slice(&up);
    }
    let map = Tensor::new(x.shape().to_vec(), data)?;
    if guided {
        map.mul(&modified_backprop(model, x, c, BackpropVariant::Guided)?)
    } else {
        Ok(map)
    }
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub(crate) fn bilinear(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let coord = |i: usize, s: usize, d: usize| -> (usize, usize, f64) {
        let pos = ((i as f64 + 0.5) * s as f64 / d as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(s - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(dh * dw);
    for y in 0..dh {
        let (y0, y1, ty) = coord(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, tx) = coord(x, sw, dw);
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bottom = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// DeepLIFT Rescale contributions of `x - reference`.
pub fn deeplift(model: &Model, x: &Tensor, c: usize, reference: &Tensor) -> Result<Tensor> {
    let (_, tape) = model.forward(x)?;
    let (_, ref_tape) = model.forward(reference)?;
    let multipliers = model.backward(&tape, BackpropRule::DeepLiftRescale(&ref_tape), c)?;
    multipliers.mul(&x.sub(reference)?)
}

/// Mean of DeepLIFT maps over several references.
pub fn deepshap(model: &Model, x: &Tensor, c: usize, references: &[Tensor]) -> Result<Tensor> {
    if references.is_empty() {
        return Err(Error::config("DeepSHAP needs at least one reference"));
    }
    let mut acc = Tensor::zeros(x.shape());
    for r in references {
        acc.add_assign(&deeplift(model, x, c, r)?)?;
    }
    let k = references.len() as f64;
    Ok(acc.map(|v| v / k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_single_cell_is_constant() {
        let out = bilinear(&[2.5], 1, 1, 4, 3);
        assert!(out.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn bilinear_identity_at_same_size() {
        let src = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(bilinear(&src, 2, 2, 2, 2), src.to_vec());
    }
}
