use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel z-normalization statistics, fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Maps a raw `[0, 1]` value of channel `c` into normalized space.
    pub fn apply(&self, c: usize, raw: f64) -> f64 {
        (raw - self.mean[c]) / self.std[c]
    }

    pub fn invert(&self, c: usize, value: f64) -> f64 {
        value * self.std[c] + self.mean[c]
    }

    /// Normalizes a `(C, H, W)` image.
    pub fn apply_image(&self, raw: &Tensor) -> Result<Tensor> {
        let (c, h, w) = raw.image_dims()?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "normalization has {} channels, image has {c}",
                self.channels()
            )));
        }
        let mut out = raw.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = self.apply(i / (h * w), *v);
        }
        Ok(out)
    }

    /// Normalized-space interval covering raw values in `[0, 1]` for channel `c`.
    pub fn valid_range(&self, c: usize) -> (f64, f64) {
        (self.apply(c, 0.0), self.apply(c, 1.0))
    }
}

/// A labelled image collection, `images` shaped `(N, C, H, W)`.
///
/// `normalization` is `None` while images still hold raw `[0, 1]` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    classes: usize,
    normalization: Option<Normalization>,
    regions: Option<Vec<Vec<bool>>>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::shape(format!(
                "dataset images must be (N, C, H, W), got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::CountMismatch {
                images: images.shape()[0],
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::shape(format!("label {bad} >= class count {classes}")));
        }
        Ok(Self {
            images,
            labels,
            classes,
            normalization: None,
            regions: None,
        })
    }

    /// Attaches per-image ground-truth masks (one flag per pixel).
    pub fn with_regions(mut self, regions: Vec<Vec<bool>>) -> Result<Self> {
        let (_, h, w) = self.image_shape();
        if regions.len() != self.len() || regions.iter().any(|r| r.len() != h * w) {
            return Err(Error::shape("region masks must cover every pixel of every image"));
        }
        self.regions = Some(regions);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn image(&self, i: usize) -> Tensor {
        self.images.batch_item(i)
    }

    /// `(C, H, W)` of each image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn region(&self, i: usize) -> Option<&[bool]> {
        self.regions.as_ref().map(|r| r[i].as_slice())
    }

    /// Per-channel mean and standard deviation of the raw images.
    pub fn fit_normalization(&self) -> Result<Normalization> {
        if self.normalization.is_some() {
            return Err(Error::config("statistics must be fitted on raw images"));
        }
        let (c, h, w) = self.image_shape();
        let plane = h * w;
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let data = self.images.data();
        for n in 0..self.len() {
            for ch in 0..c {
                let off = (n * c + ch) * plane;
                for &v in &data[off..off + plane] {
                    mean[ch] += v;
                    sq[ch] += v * v;
                }
            }
        }
        let count = (self.len() * plane) as f64;
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= count;
                let var = (s / count - *m * *m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Normalization { mean, std })
    }

    /// Copy with `stats` applied to every pixel.
    pub fn normalized(&self, stats: &Normalization) -> Result<Dataset> {
        if self.normalization.is_some() {
            return Err(Error::config("dataset is already normalized"));
        }
        let (c, h, w) = self.image_shape();
        if stats.channels() != c {
            return Err(Error::shape("normalization channel count mismatch"));
        }
        let mut images = self.images.clone();
        for (i, v) in images.data_mut().iter_mut().enumerate() {
            *v = stats.apply((i / (h * w)) % c, *v);
        }
        Ok(Dataset {
            images,
            normalization: Some(stats.clone()),
            ..self.clone()
        })
    }

    /// Copy with raw `[0, 1]` values restored.
    pub fn denormalized(&self) -> Dataset {
        let Some(stats) = &self.normalization else {
            return self.clone();
        };
        let (c, h, w) = self.image_shape();
        let mut images = self.images.clone();
        for (i, v) in images.data_mut().iter_mut().enumerate() {
            *v = stats.invert((i / (h * w)) % c, *v);
        }
        Dataset {
            images,
            normalization: None,
            ..self.clone()
        }
    }

    /// Splits into the first `n` images and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::config(format!(
                "split point {n} must leave both parts non-empty (len {})",
                self.len()
            )));
        }
        Ok((self.subset(0..n), self.subset(n..self.len())))
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        let (c, h, w) = self.image_shape();
        let per = c * h * w;
        let images = Tensor::new(
            vec![range.len(), c, h, w],
            self.images.data()[range.start * per..range.end * per].to_vec(),
        )
        .expect("subset shape");
        Dataset {
            images,
            labels: self.labels[range.clone()].to_vec(),
            classes: self.classes,
            normalization: self.normalization.clone(),
            regions: self.regions.as_ref().map(|r| r[range].to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let images = Tensor::new(vec![4, 1, 1, 2], vec![0.0, 1.0, 0.5, 0.5, 0.2, 0.8, 1.0, 0.0]).unwrap();
        Dataset::new(images, vec![0, 1, 0, 1], 2).unwrap()
    }

    #[test]
    fn normalization_centres_training_split() {
        let ds = toy();
        let stats = ds.fit_normalization().unwrap();
        let n = ds.normalized(&stats).unwrap();
        let data = n.images().data();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / data.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(n.denormalized().images().data().len(), 8);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let images = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(Dataset::new(images, vec![3], 2).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let images = Tensor::zeros(&[2, 1, 2, 2]);
        assert!(matches!(
            Dataset::new(images, vec![0], 2),
            Err(Error::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn split_keeps_order() {
        let (a, b) = toy().split_at(3).unwrap();
        assert_eq!(a.labels(), &[0, 1, 0]);
        assert_eq!(b.labels(), &[1]);
    }
}
