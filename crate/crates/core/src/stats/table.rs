use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complete image-by-method score matrix for one metric implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    metric: String,
    higher_is_better: bool,
    methods: Vec<String>,
    images: Vec<usize>,
    /// Row-major: `scores[row * methods + col]`.
    scores: Vec<f64>,
    /// Images dropped because a score was flagged or missing.
    dropped: usize,
}

impl ScoreTable {
    /// Builds a table from a complete matrix `rows[image][method]`.
    pub fn new(
        metric: impl Into<String>,
        higher_is_better: bool,
        methods: Vec<String>,
        images: Vec<usize>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if rows.len() != images.len() || rows.iter().any(|r| r.len() != methods.len()) {
            return Err(Error::shape("score rows do not match images x methods"));
        }
        Ok(Self {
            metric: metric.into(),
            higher_is_better,
            methods,
            images,
            scores: rows.concat(),
            dropped: 0,
        })
    }

    /// Collects `(image, method, score, excluded)` records. Images with any excluded,
    /// non-finite or missing score are dropped as a whole.
    pub fn from_records<'a>(
        metric: impl Into<String>,
        higher_is_better: bool,
        records: impl IntoIterator<Item = (usize, &'a str, f64, bool)>,
    ) -> Self {
        let mut methods = BTreeSet::new();
        let mut cells: BTreeMap<usize, BTreeMap<&str, Option<f64>>> = BTreeMap::new();
        for (image, method, score, excluded) in records {
            methods.insert(method);
            let ok = !excluded && score.is_finite();
            cells.entry(image).or_default().insert(method, ok.then_some(score));
        }
        let methods: Vec<String> = methods.into_iter().map(str::to_string).collect();
        let mut images = Vec::new();
        let mut scores = Vec::new();
        let mut dropped = 0;
        for (image, row) in cells {
            let values: Option<Vec<f64>> =
                methods.iter().map(|m| row.get(m.as_str()).copied().flatten()).collect();
            match values {
                Some(v) => {
                    images.push(image);
                    scores.extend(v);
                }
                None => dropped += 1,
            }
        }
        Self {
            metric: metric.into(),
            higher_is_better,
            methods,
            images,
            scores,
            dropped,
        }
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn higher_is_better(&self) -> bool {
        self.higher_is_better
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn method_index(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    pub fn image_index(&self, image: usize) -> Option<usize> {
        self.images.iter().position(|&i| i == image)
    }

    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.methods.len() + col]
    }

    /// All scores of one method, in image order.
    pub fn column(&self, method: &str) -> Option<Vec<f64>> {
        let col = self.method_index(method)?;
        Some((0..self.images.len()).map(|r| self.score(r, col)).collect())
    }

    /// All method scores on one image.
    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.methods.len();
        &self.scores[row * m..(row + 1) * m]
    }

    /// Applies `f` to every score (for invariance checks and rescaling).
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.scores.iter_mut().for_each(|v| *v = f(*v));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_rows_are_dropped() {
        let t = ScoreTable::from_records(
            "m",
            true,
            vec![
                (0, "a", 1.0, false),
                (0, "b", 2.0, false),
                (1, "a", 3.0, false),
                (1, "b", f64::NAN, true),
                (2, "a", 5.0, false),
            ],
        );
        assert_eq!(t.images(), &[0]);
        assert_eq!(t.dropped(), 2);
        assert_eq!(t.column("b").unwrap(), vec![2.0]);
    }
}
