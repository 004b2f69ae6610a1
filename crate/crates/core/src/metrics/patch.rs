use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::Explain;
use crate::autodiff::{BackpropRule, Model};
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::masking::rank_pixels;
use crate::tensor::Tensor;

use super::{Flag, MetricResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    /// Patch side in pixels; `None` means `ceil(0.3 * image side)`.
    pub side: Option<usize>,
    pub steps: usize,
    pub batch_size: usize,
    /// Signed-gradient step as a fraction of the valid value range.
    pub step_size: f64,
    /// Validation success is recorded every this many steps.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            side: None,
            steps: 200,
            batch_size: 16,
            step_size: 0.02,
            eval_every: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialPatch {
    /// `(C, side, side)` values in normalized space.
    pub patch: Tensor,
    pub target: usize,
    /// Fraction of validation images whose prediction flips to `target`.
    pub success_rate: f64,
    /// Success rate at step 0 and after every `eval_every` steps.
    pub history: Vec<f64>,
}

impl AdversarialPatch {
    pub fn side(&self) -> usize {
        self.patch.shape()[1]
    }

    /// Fewer than half of the validation images flip.
    pub fn is_weak(&self) -> bool {
        self.success_rate < 0.5
    }
}

/// Copies `patch` into `x` with its top-left corner at `(top, left)`.
pub fn place_patch(x: &Tensor, patch: &Tensor, top: usize, left: usize) -> Result<Tensor> {
    let (c, h, w) = x.image_dims()?;
    let (pc, ph, pw) = patch.image_dims()?;
    if pc != c || top + ph > h || left + pw > w {
        return Err(Error::shape(format!(
            "patch {:?} at ({top}, {left}) does not fit image {:?}",
            patch.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    let dst = out.data_mut();
    for k in 0..c {
        for y in 0..ph {
            for xx in 0..pw {
                dst[k * h * w + (top + y) * w + left + xx] = patch.data()[k * ph * pw + y * pw + xx];
            }
        }
    }
    Ok(out)
}

fn patch_pixels(w: usize, side: usize, top: usize, left: usize) -> Vec<usize> {
    (top..top + side)
        .flat_map(|y| (left..left + side).map(move |x| y * w + x))
        .collect()
}

fn random_corner(rng: &mut impl Rng, h: usize, w: usize, side: usize) -> (usize, usize) {
    (rng.random_range(0..=h - side), rng.random_range(0..=w - side))
}

/// Signed-gradient ascent on the target logit over random images and placements,
/// projected onto the valid input range after every step.
pub fn train_patch(
    model: &Model,
    train: &[Tensor],
    validation: &[Tensor],
    target: usize,
    config: &PatchConfig,
    normalization: &Normalization,
) -> Result<AdversarialPatch> {
    let first = train.first().ok_or_else(|| Error::config("patch training needs images"))?;
    let (c, h, w) = first.image_dims()?;
    if model.last_conv().is_none() {
        return Err(Error::Unsupported("adversarial patches need a convolutional model".into()));
    }
    if target >= model.classes() {
        return Err(Error::config(format!("target class {target} out of range")));
    }
    if normalization.channels() != c {
        return Err(Error::config("normalization channel count differs from the images"));
    }
    let side = config.side.unwrap_or((0.3 * h.min(w) as f64).ceil() as usize);
    if side == 0 || 2 * side > h.min(w) {
        return Err(Error::config(format!("patch side {side} exceeds half the image side")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ranges: Vec<(f64, f64)> = (0..c).map(|k| normalization.valid_range(k)).collect();
    let plane = side * side;
    let mut patch = Tensor::new(
        vec![c, side, side],
        (0..c * plane)
            .map(|i| {
                let (lo, hi) = ranges[i / plane];
                rng.random_range(lo..=hi)
            })
            .collect(),
    )?;

    let mut placement_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e_ed0f_9a7c);
    let eval_spots: Vec<(usize, usize)> = validation
        .iter()
        .map(|_| random_corner(&mut placement_rng, h, w, side))
        .collect();
    let evaluate = |patch: &Tensor| -> Result<f64> {
        let (mut eligible, mut flipped) = (0usize, 0usize);
        for (img, &(top, left)) in validation.iter().zip(&eval_spots) {
            if model.predict(img)? == target {
                continue;
            }
            eligible += 1;
            if model.predict(&place_patch(img, patch, top, left)?)? == target {
                flipped += 1;
            }
        }
        Ok(if eligible == 0 { 0.0 } else { flipped as f64 / eligible as f64 })
    };

    let every = config.eval_every.max(1);
    let mut history = vec![evaluate(&patch)?];
    for step in 1..=config.steps {
        let mut grad = vec![0.0; c * plane];
        for _ in 0..config.batch_size.max(1) {
            let img = &train[rng.random_range(0..train.len())];
            let (top, left) = random_corner(&mut rng, h, w, side);
            let (_, tape) = model.forward(&place_patch(img, &patch, top, left)?)?;
            let g = model.backward(&tape, BackpropRule::Standard, target)?;
            for k in 0..c {
                for y in 0..side {
                    for x in 0..side {
                        grad[k * plane + y * side + x] += g.data()[k * h * w + (top + y) * w + left + x];
                    }
                }
            }
        }
        for (i, v) in patch.data_mut().iter_mut().enumerate() {
            let (lo, hi) = ranges[i / plane];
            let sign = if grad[i] > 0.0 {
                1.0
            } else if grad[i] < 0.0 {
                -1.0
            } else {
                0.0
            };
            let delta = config.step_size * (hi - lo) * sign;
            *v = (*v + delta).clamp(lo, hi);
        }
        if step % every == 0 {
            history.push(evaluate(&patch)?);
        }
    }
    let success_rate = if config.steps.is_multiple_of(every) {
        *history.last().expect("history starts non-empty")
    } else {
        evaluate(&patch)?
    };
    Ok(AdversarialPatch {
        patch,
        target,
        success_rate,
        history,
    })
}

/// Intersection over union of two pixel sets.
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    let sa: HashSet<usize> = a.iter().copied().collect();
    let sb: HashSet<usize> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// IOU between the patch area and the `|patch|` most relevant pixels of the
/// attribution recomputed on the patched image. Images the patch does not flip are skipped.
pub fn impact_coverage(
    model: &Model,
    x: &Tensor,
    explain: &dyn Explain,
    patch: &AdversarialPatch,
    seed: u64,
) -> Result<MetricResult> {
    let (_, h, w) = x.image_dims()?;
    let side = patch.side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (top, left) = random_corner(&mut rng, h, w, side);
    let patched = place_patch(x, &patch.patch, top, left)?;
    if model.predict(&patched)? != patch.target {
        return Ok(MetricResult::flagged(f64::NAN, Flag::Skipped));
    }
    let e = explain.explain(&patched, patch.target)?;
    let area = patch_pixels(w, side, top, left);
    let ranking = rank_pixels(&e);
    Ok(MetricResult::ok(iou(ranking.top(area.len()), &area)))
}
