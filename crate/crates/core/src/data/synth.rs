//! Synthetic single-channel shape images with known foreground regions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The shape drawn for each class id, in class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    HorizontalBar,
    VerticalBar,
    Disk,
    Ring,
    CheckerQuadrants,
    Cross,
    Diagonal,
    SquareOutline,
    Saltire,
    Triangle,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 10] = [
        ShapeClass::HorizontalBar,
        ShapeClass::VerticalBar,
        ShapeClass::Disk,
        ShapeClass::Ring,
        ShapeClass::CheckerQuadrants,
        ShapeClass::Cross,
        ShapeClass::Diagonal,
        ShapeClass::SquareOutline,
        ShapeClass::Saltire,
        ShapeClass::Triangle,
    ];

    /// Whether offset `(dx, dy)` from the shape centre lies on the shape.
    fn covers(self, dx: f64, dy: f64, radius: f64, thickness: f64) -> bool {
        let inside_box = dx.abs() <= radius && dy.abs() <= radius;
        let dist = (dx * dx + dy * dy).sqrt();
        match self {
            ShapeClass::HorizontalBar => dy.abs() <= thickness && dx.abs() <= radius,
            ShapeClass::VerticalBar => dx.abs() <= thickness && dy.abs() <= radius,
            ShapeClass::Disk => dist <= radius,
            ShapeClass::Ring => dist <= radius && dist >= radius - 1.5 * thickness,
            ShapeClass::CheckerQuadrants => inside_box && ((dx < 0.0) == (dy < 0.0)),
            ShapeClass::Cross => {
                inside_box && (dx.abs() <= thickness || dy.abs() <= thickness)
            }
            ShapeClass::Diagonal => inside_box && (dx - dy).abs() <= 1.5 * thickness,
            ShapeClass::SquareOutline => {
                inside_box && dx.abs().max(dy.abs()) >= radius - 1.5 * thickness
            }
            ShapeClass::Saltire => {
                inside_box
                    && ((dx - dy).abs() <= 1.2 * thickness || (dx + dy).abs() <= 1.2 * thickness)
            }
            ShapeClass::Triangle => dy.abs() <= radius && dx.abs() <= (dy + radius) / 2.0,
        }
    }
}

/// Generates `count` raw images of side `size` (values in `[0, 1]`), one shape each
/// on a noisy dark background. Ground-truth shape masks are attached as regions.
pub fn synth_generate(seed: u64, count: usize, size: usize, classes: usize) -> Result<Dataset> {
    if !(16..=64).contains(&size) {
        return Err(Error::config(format!("image size {size} outside 16..=64")));
    }
    if !(2..=ShapeClass::ALL.len()).contains(&classes) {
        return Err(Error::config(format!(
            "class count {classes} outside 2..={}",
            ShapeClass::ALL.len()
        )));
    }
    if count == 0 {
        return Err(Error::config("count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = size as f64;
    let thickness = (side / 16.0).max(1.0);
    let plane = size * size;
    let mut data = Vec::with_capacity(count * plane);
    let mut labels = Vec::with_capacity(count);
    let mut regions = Vec::with_capacity(count);
    for _ in 0..count {
        let label = rng.random_range(0..classes);
        let shape = ShapeClass::ALL[label];
        let radius = side * rng.random_range(0.18..0.28);
        let margin = radius + 1.0;
        let cx = rng.random_range(margin..side - margin);
        let cy = rng.random_range(margin..side - margin);
        let brightness = rng.random_range(0.7..1.0);
        let mut mask = vec![false; plane];
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let on = shape.covers(dx, dy, radius, thickness);
                mask[y * size + x] = on;
                let v = if on {
                    brightness + rng.random_range(-0.05..0.0)
                } else {
                    rng.random_range(0.0..0.3)
                };
                data.push(v);
            }
        }
        labels.push(label);
        regions.push(mask);
    }
    let images = Tensor::new(vec![count, 1, size, size], data)?;
    Dataset::new(images, labels, classes)?.with_regions(regions)
}
