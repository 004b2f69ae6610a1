use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::correlation::average_ranks;
use super::table::ScoreTable;
use crate::error::{Error, Result};

/// Significance level used throughout.
pub const ALPHA: f64 = 0.01;

/// Largest number of non-zero differences handled by the exact null distribution.
const EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `a` tends to exceed `b`.
    Greater,
    /// `a` tends to fall below `b`.
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub p_value: f64,
    pub significant: bool,
    /// Median of `a - b`, sign-flipped for [`Alternative::Less`] so positive favours `a`.
    pub median_difference: f64,
    /// Share of the largest significant effect for the metric; set by the grid.
    pub normalized_effect: Option<f64>,
    /// No non-zero differences: nothing to test.
    pub inconclusive: bool,
    pub exact: bool,
    /// Number of non-zero differences.
    pub n: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Number of sign assignments reaching each doubled rank sum.
fn null_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

/// One-sided paired signed-rank test. Zero differences are discarded; ties share ranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestOutcome> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Degenerate("non-finite paired difference".into()));
    }
    let sign = match alternative {
        Alternative::Greater => 1.0,
        Alternative::Less => -1.0,
    };
    let median_difference = sign * median(diffs.clone());
    let nonzero: Vec<f64> = diffs.into_iter().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(TestOutcome {
            p_value: 1.0,
            significant: false,
            median_difference,
            normalized_effect: None,
            inconclusive: true,
            exact: true,
            n,
        });
    }
    if n < 5 {
        return Err(Error::shape(format!("{n} non-zero paired differences; at least 5 needed")));
    }
    let ranks = average_ranks(&nonzero.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let (p_value, exact) = if n <= EXACT_MAX {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = null_counts(&doubled);
        let observed = (2.0 * w_plus).round() as usize;
        let tail: f64 = match alternative {
            Alternative::Greater => counts[observed..].iter().sum(),
            Alternative::Less => counts[..=observed].iter().sum(),
        };
        (tail / 2f64.powi(n as i32), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let sd = var.sqrt();
        let normal = Normal::standard();
        let p = match alternative {
            Alternative::Greater => normal.sf((w_plus - mean - 0.5) / sd),
            Alternative::Less => normal.cdf((w_plus - mean + 0.5) / sd),
        };
        (p, false)
    };
    let p_value = p_value.clamp(0.0, 1.0);
    Ok(TestOutcome {
        p_value,
        significant: p_value < ALPHA,
        median_difference,
        normalized_effect: None,
        inconclusive: false,
        exact,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub metric: String,
    pub method: String,
    /// `None` when the test could not run (too few non-zero differences).
    pub outcome: Option<TestOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceGrid {
    pub baseline: String,
    pub metrics: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<GridCell>,
}

impl SignificanceGrid {
    pub fn cell(&self, metric: &str, method: &str) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.metric == metric && c.method == method)
    }

    pub fn is_significant(&self, metric: &str, method: &str) -> bool {
        self.cell(metric, method)
            .and_then(|c| c.outcome.as_ref())
            .is_some_and(|o| o.significant)
    }

    /// Method with normalized effect 1 for `metric`, if any cell is significant.
    pub fn best(&self, metric: &str) -> Option<&str> {
        self.cells
            .iter()
            .filter(|c| c.metric == metric)
            .filter_map(|c| Some((c.method.as_str(), c.outcome.as_ref()?)))
            .filter(|(_, o)| o.significant)
            .max_by(|x, y| x.1.median_difference.total_cmp(&y.1.median_difference))
            .map(|(m, _)| m)
    }
}

/// Each method against `baseline`, one-sided in the metric's good direction.
/// Normalized effects divide by the largest significant median difference per metric.
pub fn significance_grid(tables: &[ScoreTable], baseline: &str) -> Result<SignificanceGrid> {
    let mut cells = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for table in tables {
        let base = table.column(baseline).ok_or_else(|| {
            Error::config(format!("baseline {baseline:?} missing from {}", table.metric()))
        })?;
        let alternative = if table.higher_is_better() {
            Alternative::Greater
        } else {
            Alternative::Less
        };
        let start = cells.len();
        for method in table.methods() {
            if !methods.contains(method) {
                methods.push(method.clone());
            }
            let scores = table.column(method).expect("method listed by table");
            let outcome = wilcoxon_signed_rank(&scores, &base, alternative).ok();
            cells.push(GridCell {
                metric: table.metric().to_string(),
                method: method.clone(),
                outcome,
            });
        }
        let max_effect = cells[start..]
            .iter()
            .filter_map(|c| c.outcome.as_ref())
            .filter(|o| o.significant)
            .map(|o| o.median_difference)
            .fold(f64::NEG_INFINITY, f64::max);
        for cell in &mut cells[start..] {
            if let Some(o) = cell.outcome.as_mut() {
                if o.significant {
                    o.normalized_effect = Some(if max_effect > 0.0 {
                        (o.median_difference / max_effect).clamp(0.0, 1.0)
                    } else {
                        1.0
                    });
                }
            }
        }
    }
    Ok(SignificanceGrid {
        baseline: baseline.to_string(),
        metrics: tables.iter().map(|t| t.metric().to_string()).collect(),
        methods,
        cells,
    })
}
