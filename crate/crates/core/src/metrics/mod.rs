//! Metric variants for scoring attribution maps.

mod patch;
mod sampling;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use patch::{impact_coverage, iou, place_patch, train_patch, AdversarialPatch, PatchConfig};
pub use sampling::{
    infidelity, infidelity_terms, max_sensitivity, optimal_scaling, sensitivity_n,
    seg_sensitivity_n, Perturbation,
};
pub use trajectory::{deletion, insertion, irof, minimal_subset, trajectory_counts, MinimalSubsetMode};

use crate::error::Error;

/// Serialized as its display id, e.g. `"Del_MoRF"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    DelMoRF,
    DelLeRF,
    InsMoRF,
    InsLeRF,
    MsDel,
    MsIns,
    IrofMoRF,
    IrofLeRF,
    SensN,
    SegSensN,
    InfdNB,
    InfdSQ,
    SensMax,
    Cov,
}

impl MetricId {
    pub const ALL: [MetricId; 14] = [
        MetricId::DelMoRF,
        MetricId::DelLeRF,
        MetricId::InsMoRF,
        MetricId::InsLeRF,
        MetricId::MsDel,
        MetricId::MsIns,
        MetricId::IrofMoRF,
        MetricId::IrofLeRF,
        MetricId::SensN,
        MetricId::SegSensN,
        MetricId::InfdNB,
        MetricId::InfdSQ,
        MetricId::SensMax,
        MetricId::Cov,
    ];

    pub fn id(self) -> &'static str {
        match self {
            MetricId::DelMoRF => "Del_MoRF",
            MetricId::DelLeRF => "Del_LeRF",
            MetricId::InsMoRF => "Ins_MoRF",
            MetricId::InsLeRF => "Ins_LeRF",
            MetricId::MsDel => "MS_Del",
            MetricId::MsIns => "MS_Ins",
            MetricId::IrofMoRF => "IROF_MoRF",
            MetricId::IrofLeRF => "IROF_LeRF",
            MetricId::SensN => "Sens_n",
            MetricId::SegSensN => "SegSens_n",
            MetricId::InfdNB => "INFD_NB",
            MetricId::InfdSQ => "INFD_SQ",
            MetricId::SensMax => "SENS_MAX",
            MetricId::Cov => "COV",
        }
    }

    /// Whether larger scores indicate better attributions.
    pub fn higher_is_better(self) -> bool {
        matches!(
            self,
            MetricId::DelLeRF
                | MetricId::InsMoRF
                | MetricId::IrofLeRF
                | MetricId::SensN
                | MetricId::SegSensN
                | MetricId::Cov
        )
    }

    /// Type I metrics score a fixed map; type II re-run the attribution method.
    pub fn is_type_one(self) -> bool {
        !matches!(self, MetricId::SensMax | MetricId::Cov)
    }

    /// Whether a fresh seed changes the score.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            MetricId::SensN
                | MetricId::SegSensN
                | MetricId::InfdNB
                | MetricId::InfdSQ
                | MetricId::SensMax
                | MetricId::Cov
        )
    }

    /// Whether the removal masker affects the score.
    pub fn uses_masker(self) -> bool {
        !matches!(
            self,
            MetricId::InfdNB | MetricId::InfdSQ | MetricId::SensMax | MetricId::Cov
        )
    }

    pub fn needs_segmentation(self) -> bool {
        matches!(self, MetricId::IrofMoRF | MetricId::IrofLeRF | MetricId::SegSensN)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        MetricId::ALL
            .iter()
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::config(format!("unknown metric {s:?}")))
    }
}

impl Serialize for MetricId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Why a score should be excluded from (or annotated in) aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    #[default]
    None,
    /// Zero variance or zero norm made the score undefined.
    Degenerate,
    /// Minimal Subset never changed the prediction; score is the d + 1 sentinel.
    Censored,
    /// Adversarial patch did not flip this image.
    Skipped,
}

impl Flag {
    pub fn id(self) -> &'static str {
        match self {
            Flag::None => "",
            Flag::Degenerate => "degenerate",
            Flag::Censored => "censored",
            Flag::Skipped => "skipped",
        }
    }

    /// Flags that remove the score from statistics. Censored sentinels stay.
    pub fn excludes(self) -> bool {
        matches!(self, Flag::Degenerate | Flag::Skipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult {
    pub score: f64,
    pub flag: Flag,
}

impl MetricResult {
    pub fn ok(score: f64) -> Self {
        Self {
            score,
            flag: Flag::None,
        }
    }

    pub fn flagged(score: f64, flag: Flag) -> Self {
        Self { score, flag }
    }
}

/// Metric hyperparameters shared by every evaluation in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Deletion/insertion trajectory length.
    pub steps: usize,
    /// Largest fraction of pixels removed (deletion) or inserted (insertion).
    pub cap_fraction: f64,
    /// Minimal Subset scan step in pixels; `None` means `max(1, d / 200)`.
    pub ms_step: Option<usize>,
    pub subsets: usize,
    /// Sensitivity-n subset size as a fraction of pixels.
    pub sens_fraction: f64,
    /// Seg-Sensitivity-n subset size as a fraction of segments.
    pub seg_sens_fraction: f64,
    pub segments: usize,
    pub infidelity_samples: usize,
    pub infidelity_sigma: f64,
    pub max_sens_radius: f64,
    pub max_sens_samples: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            steps: 15,
            cap_fraction: 0.15,
            ms_step: None,
            subsets: 100,
            sens_fraction: 0.1,
            seg_sens_fraction: 0.1,
            segments: 100,
            infidelity_samples: 1000,
            infidelity_sigma: 0.2,
            max_sens_radius: 0.1,
            max_sens_samples: 50,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(Error::config(format!("invalid metric params: {m}")));
        if self.steps == 0 || !(self.cap_fraction > 0.0 && self.cap_fraction <= 1.0) {
            return bad("steps must be positive and cap_fraction in (0, 1]");
        }
        if self.subsets < 2 || self.infidelity_samples < 2 || self.max_sens_samples == 0 {
            return bad("sample counts too small");
        }
        if !(self.sens_fraction > 0.0 && self.sens_fraction < 1.0)
            || !(self.seg_sens_fraction > 0.0 && self.seg_sens_fraction < 1.0)
        {
            return bad("subset fractions must lie in (0, 1)");
        }
        if self.segments == 0 || !(self.infidelity_sigma > 0.0) || !(self.max_sens_radius > 0.0) {
            return bad("segments, sigma and radius must be positive");
        }
        Ok(())
    }

    pub fn sens_n(&self, d: usize) -> usize {
        ((self.sens_fraction * d as f64).ceil() as usize).clamp(1, d.saturating_sub(1).max(1))
    }

    pub fn seg_sens_n(&self, segments: usize) -> usize {
        ((self.seg_sens_fraction * segments as f64).ceil() as usize)
            .clamp(1, segments.saturating_sub(1).max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_table() {
        let high: Vec<&str> = MetricId::ALL
            .iter()
            .filter(|m| m.higher_is_better())
            .map(|m| m.id())
            .collect();
        assert_eq!(high, ["Del_LeRF", "Ins_MoRF", "IROF_LeRF", "Sens_n", "SegSens_n", "COV"]);
        assert_eq!(MetricId::ALL.iter().filter(|m| m.is_type_one()).count(), 12);
    }

    #[test]
    fn ids_round_trip() {
        for m in MetricId::ALL {
            assert_eq!(m.id().parse::<MetricId>().unwrap(), m);
        }
    }

    #[test]
    fn default_subset_sizes() {
        let p = MetricParams::default();
        assert_eq!(p.sens_n(784), 79);
        assert_eq!(p.seg_sens_n(100), 10);
        assert_eq!(p.seg_sens_n(2), 1);
        p.validate().unwrap();
    }
}
