//! SLIC superpixels and segment-level aggregation of attribution maps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A partition of an `H x W` pixel grid into `count` labelled segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Segmentation {
    /// Validates that `labels` covers every id in `0..L` at least once.
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::shape(format!(
                "{} labels for a {height}x{width} grid",
                labels.len()
            )));
        }
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); count];
        for (p, &l) in labels.iter().enumerate() {
            members[l].push(p);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::shape(format!("segment {empty} is empty")));
        }
        Ok(Self {
            height,
            width,
            labels,
            members,
        })
    }

    pub fn single(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![0; height * width]).expect("non-empty grid")
    }

    /// One segment per pixel.
    pub fn per_pixel(height: usize, width: usize) -> Self {
        Self::new(height, width, (0..height * width).collect()).expect("non-empty grid")
    }

    /// Square blocks of side `block`, numbered row by row.
    pub fn grid(height: usize, width: usize, block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::config("block size must be positive"));
        }
        let per_row = width.div_ceil(block);
        let labels = (0..height * width)
            .map(|p| (p / width / block) * per_row + (p % width) / block)
            .collect();
        Self::new(height, width, labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, pixel: usize) -> usize {
        self.labels[pixel]
    }

    /// Pixel indices of segment `l`, ascending.
    pub fn members(&self, l: usize) -> &[usize] {
        &self.members[l]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Whether every segment is a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let comps = components(self.height, self.width, &self.labels);
        comps.iter().max().map_or(0, |m| m + 1) == self.count()
    }

    /// Binary PGM (P5) with the label as grey level; 16-bit samples beyond 255 labels.
    pub fn to_pgm(&self) -> Vec<u8> {
        let maxval = self.count().saturating_sub(1).max(1);
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, maxval).into_bytes();
        for &l in &self.labels {
            if maxval > 255 {
                out.extend_from_slice(&(l as u16).to_be_bytes());
            } else {
                out.push(l as u8);
            }
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub target: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target: 100,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

impl SlicParams {
    pub fn with_target(target: usize) -> Self {
        Self {
            target,
            ..Self::default()
        }
    }
}

/// SLIC over per-channel intensities rescaled to `[0, 100]`, followed by a
/// connectivity pass. Deterministic: seeds sit on a regular grid.
pub fn slic(image: &Tensor, params: &SlicParams) -> Result<Segmentation> {
    let (c, h, w) = image.image_dims()?;
    if h < 8 || w < 8 {
        return Err(Error::shape(format!("SLIC needs at least 8x8 pixels, got {h}x{w}")));
    }
    let n = h * w;
    if params.target == 0 || params.target > n {
        return Err(Error::shape(format!(
            "target of {} segments for {n} pixels",
            params.target
        )));
    }
    if !(params.compactness > 0.0) {
        return Err(Error::config("compactness must be positive"));
    }

    let (lo, hi) = (image.min(), image.max());
    let scale = if hi > lo { 100.0 / (hi - lo) } else { 0.0 };
    let color: Vec<f64> = image.data().iter().map(|v| (v - lo) * scale).collect();
    let px = |ch: usize, p: usize| color[ch * n + p];

    let step = (n as f64 / params.target as f64).sqrt();
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    // centre = (y, x, colour...)
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(ny * nx);
    for j in 0..ny {
        for i in 0..nx {
            let y = (j as f64 + 0.5) * h as f64 / ny as f64;
            let x = (i as f64 + 0.5) * w as f64 / nx as f64;
            let p = (y as usize).min(h - 1) * w + (x as usize).min(w - 1);
            let mut v = vec![y, x];
            v.extend((0..c).map(|ch| px(ch, p)));
            centres.push(v);
        }
    }

    let spatial = (params.compactness / step).powi(2);
    let reach = (2.0 * step).ceil() as isize;
    let mut labels = vec![0usize; n];
    let mut best = vec![f64::INFINITY; n];
    for _ in 0..params.iterations.max(1) {
        best.iter_mut().for_each(|b| *b = f64::INFINITY);
        for (k, ctr) in centres.iter().enumerate() {
            let (cy, cx) = (ctr[0] as isize, ctr[1] as isize);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach) as usize).min(h - 1);
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let dy = y as f64 + 0.5 - ctr[0];
                    let dx = x as f64 + 0.5 - ctr[1];
                    let dc: f64 = (0..c).map(|ch| (px(ch, p) - ctr[2 + ch]).powi(2)).sum();
                    let d = dc + spatial * (dy * dy + dx * dx);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }
        let mut sums = vec![vec![0.0; 2 + c]; centres.len()];
        let mut counts = vec![0usize; centres.len()];
        for (p, &k) in labels.iter().enumerate() {
            counts[k] += 1;
            sums[k][0] += (p / w) as f64 + 0.5;
            sums[k][1] += (p % w) as f64 + 0.5;
            for ch in 0..c {
                sums[k][2 + ch] += px(ch, p);
            }
        }
        for ((ctr, s), &cnt) in centres.iter_mut().zip(&sums).zip(&counts) {
            if cnt > 0 {
                for (v, t) in ctr.iter_mut().zip(s) {
                    *v = t / cnt as f64;
                }
            }
        }
    }

    let min_size = ((n as f64 / centres.len() as f64) / 4.0).floor().max(1.0) as usize;
    Segmentation::new(h, w, enforce_connectivity(h, w, &labels, min_size))
}

/// 4-connected components of equal labels, numbered in raster order of first pixel.
fn components(h: usize, w: usize, labels: &[usize]) -> Vec<usize> {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in neighbours(p, h, w) {
                if comp[q] == usize::MAX && labels[q] == labels[start] {
                    comp[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    comp
}

fn neighbours(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    [
        (y > 0).then(|| p - w),
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
        (y + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// Each cluster keeps its largest component; other fragments and anything below
/// `min_size` are absorbed, smallest first, by their largest adjacent region.
fn enforce_connectivity(h: usize, w: usize, labels: &[usize], min_size: usize) -> Vec<usize> {
    let comp = components(h, w, labels);
    let ncomp = comp.iter().max().map_or(0, |m| m + 1);
    let mut size = vec![0usize; ncomp];
    let mut owner = vec![0usize; ncomp];
    for (p, &k) in comp.iter().enumerate() {
        size[k] += 1;
        owner[k] = labels[p];
    }
    let mut main: std::collections::HashMap<usize, usize> = Default::default();
    for k in 0..ncomp {
        let e = main.entry(owner[k]).or_insert(k);
        if size[k] > size[*e] {
            *e = k;
        }
    }
    let mut adjacent = vec![Vec::new(); ncomp];
    for p in 0..comp.len() {
        for q in neighbours(p, h, w) {
            if comp[p] != comp[q] {
                adjacent[comp[p]].push(comp[q]);
            }
        }
    }
    for a in &mut adjacent {
        a.sort_unstable();
        a.dedup();
    }

    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut merged = size.clone();
    fn root(parent: &mut [usize], mut k: usize) -> usize {
        while parent[k] != k {
            parent[k] = parent[parent[k]];
            k = parent[k];
        }
        k
    }
    let mut orphans: Vec<usize> = (0..ncomp)
        .filter(|&k| main[&owner[k]] != k || size[k] < min_size)
        .collect();
    orphans.sort_by_key(|&k| (size[k], k));
    for k in orphans {
        let rk = root(&mut parent, k);
        let mut target: Option<usize> = None;
        for &nb in &adjacent[k] {
            let rn = root(&mut parent, nb);
            if rn == rk {
                continue;
            }
            target = match target {
                Some(t) if merged[t] > merged[rn] || (merged[t] == merged[rn] && t < rn) => Some(t),
                _ => Some(rn),
            };
        }
        if let Some(t) = target {
            parent[rk] = t;
            merged[t] += merged[rk];
        }
    }

    let mut renumber = vec![usize::MAX; ncomp];
    let mut next = 0;
    comp.iter()
        .map(|&k| {
            let r = root(&mut parent, k);
            if renumber[r] == usize::MAX {
                renumber[r] = next;
                next += 1;
            }
            renumber[r]
        })
        .collect()
}

/// How pixel attributions are pooled inside a segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Signed,
    Absolute,
}

/// Mean channel-averaged attribution of each segment.
pub fn segment_attribution(e: &Tensor, s: &Segmentation, agg: Aggregation) -> Result<Vec<f64>> {
    let (_, h, w) = e.image_dims()?;
    if (h, w) != (s.height, s.width) {
        return Err(Error::shape(format!(
            "map is {h}x{w}, segmentation is {}x{}",
            s.height, s.width
        )));
    }
    let means = e.pixel_means();
    Ok(s.members
        .iter()
        .map(|m| {
            let total: f64 = m
                .iter()
                .map(|&p| match agg {
                    Aggregation::Signed => means[p],
                    Aggregation::Absolute => means[p].abs(),
                })
                .sum();
            total / m.len() as f64
        })
        .collect())
}
