use serde::{Deserialize, Serialize};

use super::table::ScoreTable;

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` for fewer than two points or a constant side.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 || !(saa * sbb).is_finite() {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Metric-by-metric Spearman correlations averaged over methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<String>,
    /// `NaN` where no method gave a defined correlation.
    pub values: Vec<Vec<f64>>,
    /// Number of methods contributing to each cell.
    pub coverage: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.metrics.iter().position(|m| m == a)?;
        let j = self.metrics.iter().position(|m| m == b)?;
        let v = self.values[i][j];
        (!v.is_nan()).then_some(v)
    }
}

/// For each method outside `exclude`, Spearman over the images two tables share,
/// then the mean across methods. Pairs with fewer than 3 images or a constant side are skipped.
pub fn inter_metric_correlation(tables: &[ScoreTable], exclude: &[&str]) -> CorrelationMatrix {
    let k = tables.len();
    let mut values = vec![vec![f64::NAN; k]; k];
    let mut coverage = vec![vec![0usize; k]; k];
    for i in 0..k {
        for j in i..k {
            let (ta, tb) = (&tables[i], &tables[j]);
            let mut sum = 0.0;
            let mut count = 0;
            for method in ta.methods() {
                if exclude.contains(&method.as_str()) {
                    continue;
                }
                let (Some(ca), Some(cb)) = (ta.method_index(method), tb.method_index(method)) else {
                    continue;
                };
                let (mut xa, mut xb) = (Vec::new(), Vec::new());
                for (row, image) in ta.images().iter().enumerate() {
                    if let Some(rb) = tb.image_index(*image) {
                        xa.push(ta.score(row, ca));
                        xb.push(tb.score(rb, cb));
                    }
                }
                if xa.len() < 3 {
                    continue;
                }
                if let Some(r) = spearman(&xa, &xb) {
                    sum += r;
                    count += 1;
                }
            }
            let v = if count > 0 { sum / count as f64 } else { f64::NAN };
            values[i][j] = v;
            values[j][i] = v;
            coverage[i][j] = count;
            coverage[j][i] = count;
        }
    }
    CorrelationMatrix {
        metrics: tables.iter().map(|t| t.metric().to_string()).collect(),
        values,
        coverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_hand_value() {
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert!((r + 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_side_is_undefined() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }
}
