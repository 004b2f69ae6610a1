use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stats::{krippendorff_alpha, CorrelationMatrix, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rationale {
    /// Passed the agreement filter and is not redundant with a kept metric.
    Selected,
    /// Kept because the user pinned it.
    Pinned,
    /// α below the threshold.
    LowAlpha,
    /// α undefined: no variation in method rankings.
    UndefinedAlpha,
    /// |ρ| at or above the dedup threshold with a kept metric of higher α.
    Correlated,
}

impl Rationale {
    pub fn code(self) -> &'static str {
        match self {
            Rationale::Selected => "SELECTED",
            Rationale::Pinned => "PINNED",
            Rationale::LowAlpha => "LOW_ALPHA",
            Rationale::UndefinedAlpha => "UNDEFINED_ALPHA",
            Rationale::Correlated => "CORRELATED",
        }
    }

    pub fn keeps(self) -> bool {
        matches!(self, Rationale::Selected | Rationale::Pinned)
    }
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDecision {
    pub metric: String,
    pub alpha: Option<f64>,
    pub rationale: Rationale,
    /// The kept metric this one duplicates, for `CORRELATED`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlated_with: Option<String>,
}

/// A MoRF/LeRF pair of one metric family, kept together but flagged as likely redundant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundantPair {
    pub morf: String,
    pub lerf: String,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotReport {
    pub alpha_threshold: f64,
    pub dedup_threshold: f64,
    pub decisions: Vec<MetricDecision>,
    pub correlation: CorrelationMatrix,
    pub redundant_pairs: Vec<RedundantPair>,
}

impl PilotReport {
    pub fn selected(&self) -> Vec<String> {
        self.decisions
            .iter()
            .filter(|d| d.rationale.keeps())
            .map(|d| d.metric.clone())
            .collect()
    }

    pub fn decision(&self, metric: &str) -> Option<&MetricDecision> {
        self.decisions.iter().find(|d| d.metric == metric)
    }
}

/// The LeRF twin of a MoRF key, e.g. `Del_MoRF/blur` -> `Del_LeRF/blur`.
fn lerf_twin(key: &str) -> Option<String> {
    key.contains("_MoRF").then(|| key.replacen("_MoRF", "_LeRF", 1))
}

/// Applies the agreement filter and correlation dedup.
///
/// Pinned metrics are kept unconditionally and considered first; the rest are
/// visited by descending α (ties in input order), each dropped if it correlates
/// at `|ρ| >= dedup_threshold` with an already kept metric.
pub fn select_metrics(
    alphas: &[(String, Option<f64>)],
    correlation: CorrelationMatrix,
    pinned: &[String],
    alpha_threshold: f64,
    dedup_threshold: f64,
) -> PilotReport {
    let mut decisions: Vec<MetricDecision> = alphas
        .iter()
        .map(|(metric, alpha)| {
            let rationale = if pinned.contains(metric) {
                Rationale::Pinned
            } else {
                match alpha {
                    None => Rationale::UndefinedAlpha,
                    Some(a) if *a < alpha_threshold => Rationale::LowAlpha,
                    Some(_) => Rationale::Selected,
                }
            };
            MetricDecision {
                metric: metric.clone(),
                alpha: *alpha,
                rationale,
                correlated_with: None,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..decisions.len())
        .filter(|&i| decisions[i].rationale.keeps())
        .collect();
    order.sort_by(|&i, &j| {
        let pi = decisions[i].rationale == Rationale::Pinned;
        let pj = decisions[j].rationale == Rationale::Pinned;
        pj.cmp(&pi)
            .then(decisions[j].alpha.unwrap_or(f64::NEG_INFINITY).total_cmp(&decisions[i].alpha.unwrap_or(f64::NEG_INFINITY)))
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if decisions[i].rationale == Rationale::Selected {
            let clash = kept.iter().copied().find(|&k| {
                correlation
                    .get(&decisions[i].metric, &decisions[k].metric)
                    .is_some_and(|r| r.abs() >= dedup_threshold)
            });
            if let Some(k) = clash {
                decisions[i].rationale = Rationale::Correlated;
                decisions[i].correlated_with = Some(decisions[k].metric.clone());
                continue;
            }
        }
        kept.push(i);
    }

    let redundant_pairs = alphas
        .iter()
        .filter_map(|(m, _)| {
            let twin = lerf_twin(m)?;
            alphas.iter().any(|(o, _)| *o == twin).then(|| RedundantPair {
                spearman: correlation.get(m, &twin),
                morf: m.clone(),
                lerf: twin,
            })
        })
        .collect();

    PilotReport {
        alpha_threshold,
        dedup_threshold,
        decisions,
        correlation,
        redundant_pairs,
    }
}

/// α per table, in table order.
pub fn table_alphas(tables: &[ScoreTable]) -> Vec<(String, Option<f64>)> {
    tables
        .iter()
        .map(|t| (t.metric().to_string(), krippendorff_alpha(t)))
        .collect()
}
