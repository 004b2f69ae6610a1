use serde::{Deserialize, Serialize};

use super::correlation::average_ranks;
use super::table::ScoreTable;
use crate::error::{Error, Result};

/// Krippendorff's alpha with the ordinal difference metric for a complete design:
/// `units[u]` holds every value assigned to unit `u`. `None` when expected
/// disagreement vanishes (a single distinct value).
pub fn ordinal_alpha(units: &[Vec<f64>]) -> Option<f64> {
    let mut levels: Vec<f64> = units.iter().flatten().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let v = levels.len();
    let level = |x: f64| levels.binary_search_by(|l| l.total_cmp(&x)).expect("value is a level");

    let mut o = vec![0.0; v * v];
    for unit in units {
        let m = unit.len();
        if m < 2 {
            continue;
        }
        let mut counts = vec![0.0; v];
        for &x in unit {
            counts[level(x)] += 1.0;
        }
        let scale = 1.0 / (m - 1) as f64;
        for c in 0..v {
            if counts[c] == 0.0 {
                continue;
            }
            for k in 0..v {
                let pairs = if c == k {
                    counts[c] * (counts[c] - 1.0)
                } else {
                    counts[c] * counts[k]
                };
                o[c * v + k] += pairs * scale;
            }
        }
    }
    let marg: Vec<f64> = (0..v).map(|c| (0..v).map(|k| o[c * v + k]).sum()).collect();
    let n: f64 = marg.iter().sum();
    let delta = |c: usize, k: usize| -> f64 {
        let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
        let span: f64 = marg[lo..=hi].iter().sum();
        (span - (marg[lo] + marg[hi]) / 2.0).powi(2)
    };
    let (mut observed, mut expected) = (0.0, 0.0);
    for c in 0..v {
        for k in 0..v {
            let d = delta(c, k);
            observed += o[c * v + k] * d;
            expected += marg[c] * marg[k] * d;
        }
    }
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - (n - 1.0) * observed / expected)
}

/// Ranking consistency of methods across images: each image ranks the methods
/// (best first, average ranks for ties) and each method is a unit rated by every image.
pub fn krippendorff_alpha(table: &ScoreTable) -> Option<f64> {
    let m = table.methods().len();
    if table.images().len() < 2 || m < 2 {
        return None;
    }
    let mut units = vec![Vec::with_capacity(table.images().len()); m];
    for row in 0..table.images().len() {
        let oriented: Vec<f64> = table
            .row(row)
            .iter()
            .map(|&s| if table.higher_is_better() { -s } else { s })
            .collect();
        for (unit, r) in units.iter_mut().zip(average_ranks(&oriented)) {
            unit.push(r);
        }
    }
    ordinal_alpha(&units)
}

/// Fraction of images where `a` beats `b`; ties count one half.
pub fn cles(a: &[f64], b: &[f64], higher_is_better: bool) -> f64 {
    assert_eq!(a.len(), b.len(), "cles needs paired samples");
    if a.is_empty() {
        return 0.5;
    }
    let wins: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            if x == y {
                0.5
            } else if (x > y) == higher_is_better {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    wins / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Per-image `mean^2 / variance` over repeats; `+inf` for zero variance.
    pub snr: Vec<f64>,
    /// Mean within-image variance over the variance of all measurements pooled.
    pub noise_fraction: f64,
}

impl StabilityReport {
    pub fn median_snr(&self) -> f64 {
        let mut v = self.snr.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// `scores[image][repeat]`, each image measured at least twice.
pub fn stability_analysis(scores: &[Vec<f64>]) -> Result<StabilityReport> {
    if scores.is_empty() || scores.iter().any(|r| r.len() < 2) {
        return Err(Error::config("stability analysis needs at least 2 repeats per image"));
    }
    let mut snr = Vec::with_capacity(scores.len());
    let mut within = 0.0;
    for row in scores {
        let (mu, var) = mean_var(row);
        within += var;
        snr.push(if var == 0.0 { f64::INFINITY } else { mu * mu / var });
    }
    within /= scores.len() as f64;
    let pooled: Vec<f64> = scores.iter().flatten().copied().collect();
    let (_, total) = mean_var(&pooled);
    let noise_fraction = if total == 0.0 { 0.0 } else { within / total };
    Ok(StabilityReport { snr, noise_fraction })
}
