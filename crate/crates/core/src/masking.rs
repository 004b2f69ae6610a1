//! Feature removal: maskers and ranked pixel/segment masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::segmentation::{segment_attribution, Aggregation, Segmentation};
use crate::tensor::Tensor;

/// Replacement rule for removed pixels. Inputs are assumed z-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Masker {
    /// Constant zero, i.e. the dataset mean in normalized space.
    DatasetMean,
    /// Raw `U(0, 1)` draws mapped through the dataset normalization.
    UniformRandom { seed: u64, normalization: Normalization },
    /// Gaussian-weighted neighbourhood average of the original image.
    Blur { kernel: usize },
}

impl Masker {
    pub fn blur() -> Self {
        Masker::Blur { kernel: 9 }
    }

    /// Short identifier used in score tables.
    pub fn id(&self) -> &'static str {
        match self {
            Masker::DatasetMean => "constant",
            Masker::UniformRandom { .. } => "uniform",
            Masker::Blur { .. } => "blur",
        }
    }

    /// Same variant with a different random stream (no-op for deterministic maskers).
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            Masker::UniformRandom { normalization, .. } => Masker::UniformRandom {
                seed,
                normalization: normalization.clone(),
            },
            other => other.clone(),
        }
    }

    /// The full replacement image for `x`; masking copies pixels out of it.
    pub fn fill(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = x.image_dims()?;
        match self {
            Masker::DatasetMean => Ok(Tensor::zeros(x.shape())),
            Masker::UniformRandom {
                seed,
                normalization,
            } => {
                if normalization.channels() != c {
                    return Err(Error::config(format!(
                        "uniform masker normalization has {} channels, image has {c}",
                        normalization.channels()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let data = (0..c * h * w)
                    .map(|i| normalization.apply(i / (h * w), rng.random::<f64>()))
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            Masker::Blur { kernel } => blur(x, *kernel),
        }
    }
}

fn blur(x: &Tensor, kernel: usize) -> Result<Tensor> {
    if kernel.is_multiple_of(2) {
        return Err(Error::config(format!("blur kernel {kernel} must be odd")));
    }
    let (c, h, w) = x.image_dims()?;
    let r = (kernel / 2) as isize;
    let sigma = kernel as f64 / 3.0;
    let weights: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for dy in -r..=r {
                    let yy = y + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for dx in -r..=r {
                        let xs = xx + dx;
                        if xs < 0 || xs >= w as isize {
                            continue;
                        }
                        let wt = weights[(dy + r) as usize] * weights[(dx + r) as usize];
                        acc += wt * plane[yy as usize * w + xs as usize];
                        norm += wt;
                    }
                }
                out[ch * h * w + y as usize * w + xx as usize] = acc / norm;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Masking order: most or least relevant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    MoRF,
    LeRF,
}

impl Order {
    pub fn id(self) -> &'static str {
        match self {
            Order::MoRF => "MoRF",
            Order::LeRF => "LeRF",
        }
    }
}

/// Pixel indices by descending channel-mean attribution, ties by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelRanking {
    order: Vec<usize>,
}

impl PixelRanking {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `k` highest-ranked pixels.
    pub fn top(&self, k: usize) -> &[usize] {
        &self.order[..k]
    }

    /// The `k` lowest-ranked pixels; the complement of `top(d - k)`.
    pub fn bottom(&self, k: usize) -> &[usize] {
        &self.order[self.order.len() - k..]
    }
}

pub fn rank_pixels(e: &Tensor) -> PixelRanking {
    PixelRanking::from_scores(&e.pixel_means())
}

/// Copies `pixels` (all channels) from `fill` into a copy of `x`.
pub fn mask_pixels(x: &Tensor, fill: &Tensor, pixels: &[usize]) -> Tensor {
    let mut out = x.clone();
    mask_pixels_in_place(&mut out, fill, pixels);
    out
}

pub(crate) fn mask_pixels_in_place(out: &mut Tensor, fill: &Tensor, pixels: &[usize]) {
    let (c, h, w) = out.image_dims().expect("image tensor");
    let d = h * w;
    let src = fill.data();
    let dst = out.data_mut();
    for &p in pixels {
        for ch in 0..c {
            dst[ch * d + p] = src[ch * d + p];
        }
    }
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k > d {
        return Err(Error::shape(format!("cannot mask {k} of {d} pixels")));
    }
    Ok(())
}

fn check_ranking(x: &Tensor, ranking: &PixelRanking) -> Result<()> {
    let (_, h, w) = x.image_dims()?;
    if ranking.len() != h * w {
        return Err(Error::shape(format!(
            "ranking covers {} pixels, image has {}",
            ranking.len(),
            h * w
        )));
    }
    Ok(())
}

/// `x` with its `k` most relevant pixels removed.
pub fn mask_top(x: &Tensor, ranking: &PixelRanking, k: usize, masker: &Masker) -> Result<Tensor> {
    check_ranking(x, ranking)?;
    check_k(k, ranking.len())?;
    Ok(mask_pixels(x, &masker.fill(x)?, ranking.top(k)))
}

/// `x` with its `k` least relevant pixels removed.
pub fn mask_bottom(x: &Tensor, ranking: &PixelRanking, k: usize, masker: &Masker) -> Result<Tensor> {
    check_ranking(x, ranking)?;
    check_k(k, ranking.len())?;
    Ok(mask_pixels(x, &masker.fill(x)?, ranking.bottom(k)))
}

/// Segment labels in removal order. Ties go to the lower label in both orders.
pub fn rank_segments(scores: &[f64], order: Order) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    match order {
        Order::MoRF => idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a])),
        Order::LeRF => idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b])),
    }
    idx
}

/// Copies every pixel of the listed segments from `fill`.
pub fn mask_segment_set(x: &Tensor, fill: &Tensor, s: &Segmentation, segments: &[usize]) -> Tensor {
    let mut out = x.clone();
    for &l in segments {
        mask_pixels_in_place(&mut out, fill, s.members(l));
    }
    out
}

/// `x` with the `k` most (or least) relevant segments removed.
pub fn mask_segments(
    x: &Tensor,
    e: &Tensor,
    s: &Segmentation,
    k: usize,
    masker: &Masker,
    order: Order,
) -> Result<Tensor> {
    if k > s.count() {
        return Err(Error::shape(format!("cannot mask {k} of {} segments", s.count())));
    }
    let scores = segment_attribution(e, s, Aggregation::Signed)?;
    let ranked = rank_segments(&scores, order);
    Ok(mask_segment_set(x, &masker.fill(x)?, s, &ranked[..k]))
}
