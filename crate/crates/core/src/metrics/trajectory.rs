use crate::autodiff::Model;
use crate::error::{Error, Result};
use crate::masking::{mask_pixels, mask_segment_set, rank_pixels, rank_segments, Masker, Order};
use crate::segmentation::{segment_attribution, Aggregation, Segmentation};
use crate::tensor::Tensor;

use super::{Flag, MetricResult};

/// Pixel counts along a trajectory: `floor(i * cap / steps)` for `i` in `1..=steps`,
/// `cap = floor(cap_fraction * d)`.
pub fn trajectory_counts(d: usize, steps: usize, cap_fraction: f64) -> Result<Vec<usize>> {
    if steps == 0 || !(cap_fraction > 0.0 && cap_fraction <= 1.0) {
        return Err(Error::config("trajectory needs steps > 0 and cap in (0, 1]"));
    }
    let cap = ((cap_fraction * d as f64).floor() as usize).clamp(1, d);
    Ok((1..=steps).map(|i| i * cap / steps).collect())
}

fn logit(model: &Model, x: &Tensor, c: usize) -> Result<f64> {
    Ok(model.logits(x)?.data()[c])
}

/// Mean over `(masked count, logit)` pairs, summed in ascending masked-count order
/// so trajectories that visit the same images agree bit for bit.
fn canonical_mean(mut points: Vec<(usize, f64)>) -> f64 {
    points.sort_by_key(|p| p.0);
    let n = points.len() as f64;
    points.iter().map(|p| p.1).sum::<f64>() / n
}

fn pixels_for(order: Order, ranking: &crate::masking::PixelRanking, masked: usize) -> &[usize] {
    match order {
        Order::MoRF => ranking.top(masked),
        Order::LeRF => ranking.bottom(masked),
    }
}

/// Mean logit while removing `i * cap / steps` pixels, `i = 1..=steps`.
#[allow(clippy::too_many_arguments)]
pub fn deletion(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    order: Order,
    masker: &Masker,
    steps: usize,
    cap_fraction: f64,
) -> Result<f64> {
    e.check_same_shape(x)?;
    let ranking = rank_pixels(e);
    let fill = masker.fill(x)?;
    let mut points = Vec::with_capacity(steps);
    for k in trajectory_counts(ranking.len(), steps, cap_fraction)? {
        let img = mask_pixels(x, &fill, pixels_for(order, &ranking, k));
        points.push((k, logit(model, &img, c)?));
    }
    Ok(canonical_mean(points))
}

/// Mean logit while inserting pixels onto the fully masked image. Step `k = 0..steps`
/// shows `k * cap / steps` inserted pixels, most relevant first for MoRF.
#[allow(clippy::too_many_arguments)]
pub fn insertion(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    order: Order,
    masker: &Masker,
    steps: usize,
    cap_fraction: f64,
) -> Result<f64> {
    e.check_same_shape(x)?;
    let ranking = rank_pixels(e);
    let d = ranking.len();
    let fill = masker.fill(x)?;
    let inserted = std::iter::once(0).chain(trajectory_counts(d, steps, cap_fraction)?.into_iter().take(steps - 1));
    // Inserting the top k equals removing the bottom d - k, and vice versa.
    let removal = match order {
        Order::MoRF => Order::LeRF,
        Order::LeRF => Order::MoRF,
    };
    let mut points = Vec::with_capacity(steps);
    for k in inserted {
        let masked = d - k;
        let img = mask_pixels(x, &fill, pixels_for(removal, &ranking, masked));
        points.push((masked, logit(model, &img, c)?));
    }
    Ok(canonical_mean(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimalSubsetMode {
    /// Fewest most-relevant pixels whose removal changes the prediction.
    Deletion,
    /// Fewest most-relevant pixels that, alone, restore the prediction.
    Insertion,
}

/// Linear scan in steps of `step` (default `max(1, d / 200)`); `d + 1` when no count qualifies.
pub fn minimal_subset(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    mode: MinimalSubsetMode,
    masker: &Masker,
    step: Option<usize>,
) -> Result<MetricResult> {
    e.check_same_shape(x)?;
    let ranking = rank_pixels(e);
    let d = ranking.len();
    let step = step.unwrap_or((d / 200).max(1)).max(1);
    let fill = masker.fill(x)?;
    let original = model.predict(x)?;
    let start = match mode {
        MinimalSubsetMode::Deletion => step.min(d),
        MinimalSubsetMode::Insertion => 0,
    };
    let mut k = start;
    loop {
        let found = match mode {
            MinimalSubsetMode::Deletion => {
                model.predict(&mask_pixels(x, &fill, ranking.top(k)))? != original
            }
            MinimalSubsetMode::Insertion => {
                model.predict(&mask_pixels(x, &fill, ranking.bottom(d - k)))? == original
            }
        };
        if found {
            return Ok(MetricResult::ok(k as f64));
        }
        if k == d {
            return Ok(MetricResult::flagged((d + 1) as f64, Flag::Censored));
        }
        k = (k + step).min(d);
    }
}

/// Mean logit while removing segments one by one in score order.
pub fn irof(
    model: &Model,
    x: &Tensor,
    e: &Tensor,
    c: usize,
    order: Order,
    masker: &Masker,
    s: &Segmentation,
) -> Result<f64> {
    e.check_same_shape(x)?;
    let scores = segment_attribution(e, s, Aggregation::Signed)?;
    let ranked = rank_segments(&scores, order);
    let fill = masker.fill(x)?;
    let mut total = 0.0;
    for k in 1..=ranked.len() {
        let img = mask_segment_set(x, &fill, s, &ranked[..k]);
        total += logit(model, &img, c)?;
    }
    Ok(total / ranked.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(trajectory_counts(100, 15, 0.15).unwrap(), (1..=15).collect::<Vec<_>>());
        assert_eq!(trajectory_counts(4, 4, 1.0).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(trajectory_counts(784, 15, 0.15).unwrap().last(), Some(&117));
    }
}
