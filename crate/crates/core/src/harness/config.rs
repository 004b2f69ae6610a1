use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{Method, MethodConfig};
use crate::autodiff::CnnWidths;
use crate::data::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::{MetricId, MetricParams, PatchConfig};

/// Environment variable holding the root that relative output directories resolve against.
pub const OUTPUT_ROOT_ENV: &str = "ATTRIB_BENCH_OUTPUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated shapes with known foreground regions.
    Synthetic {
        seed: u64,
        train: usize,
        test: usize,
        size: usize,
        classes: usize,
    },
    /// IDX archives; normalization is fitted on the training pair.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Synthetic { .. } => "synthetic",
            DatasetSpec::Idx { .. } => "idx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Train the small CNN from scratch (reused from the output directory when unchanged).
    Train {
        #[serde(default)]
        widths: CnnWidths,
        #[serde(default)]
        init_seed: u64,
        train: TrainConfig,
    },
    /// Load an ATTB weight file.
    Weights { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskerKind {
    Constant,
    Uniform,
    Blur,
}

impl MaskerKind {
    pub fn id(self) -> &'static str {
        match self {
            MaskerKind::Constant => "constant",
            MaskerKind::Uniform => "uniform",
            MaskerKind::Blur => "blur",
        }
    }
}

/// One metric implementation: a metric plus, where it removes pixels, a masker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: MetricId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masker: Option<MaskerKind>,
}

impl MetricEntry {
    pub fn new(metric: MetricId, masker: MaskerKind) -> Self {
        Self {
            metric,
            masker: metric.uses_masker().then_some(masker),
        }
    }

    /// The masker actually used (constant when unspecified).
    pub fn masker_kind(&self) -> Option<MaskerKind> {
        self.metric
            .uses_masker()
            .then(|| self.masker.unwrap_or(MaskerKind::Constant))
    }

    /// Table key such as `Del_MoRF/blur`.
    pub fn key(&self) -> String {
        match self.masker_kind() {
            Some(m) => format!("{}/{}", self.metric.id(), m.id()),
            None => self.metric.id().to_string(),
        }
    }
}

impl fmt::Display for MetricEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for MetricEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (metric, masker) = match s.split_once('/') {
            Some((m, k)) => {
                let kind = match k {
                    "constant" => MaskerKind::Constant,
                    "uniform" => MaskerKind::Uniform,
                    "blur" => MaskerKind::Blur,
                    other => return Err(Error::config(format!("unknown masker {other:?}"))),
                };
                (m.parse::<MetricId>()?, Some(kind))
            }
            None => (s.parse::<MetricId>()?, None),
        };
        if masker.is_some() && !metric.uses_masker() {
            return Err(Error::config(format!("metric {metric} takes no masker")));
        }
        Ok(MetricEntry {
            metric,
            masker: masker.or(metric.uses_masker().then_some(MaskerKind::Constant)),
        })
    }
}

/// A scored column: an attribution method, or the ground-region indicator on
/// datasets that carry regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodRef {
    Attribution(Method),
    RegionOracle,
}

impl MethodRef {
    pub const REGION_ORACLE: &'static str = "region_oracle";

    pub fn id(&self) -> &'static str {
        match self {
            MethodRef::Attribution(m) => m.id(),
            MethodRef::RegionOracle => Self::REGION_ORACLE,
        }
    }
}

impl FromStr for MethodRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == Self::REGION_ORACLE {
            Ok(MethodRef::RegionOracle)
        } else {
            Ok(MethodRef::Attribution(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    /// Attribution method whose maps are scored repeatedly.
    pub method: String,
    pub repeats: usize,
    /// Cohort prefix used; `None` means the whole cohort.
    pub images: Option<usize>,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        Self {
            method: Method::Gradient.id().to_string(),
            repeats: 100,
            images: None,
        }
    }
}

fn default_baseline() -> String {
    Method::Random.id().to_string()
}

fn default_cohort() -> usize {
    256
}

fn default_pilot() -> usize {
    64
}

fn default_blur() -> usize {
    9
}

fn default_references() -> usize {
    256
}

fn default_alpha_threshold() -> f64 {
    0.3
}

fn default_dedup_threshold() -> f64 {
    0.8
}

fn all_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.id().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default = "all_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default)]
    pub method_config: MethodConfig,
    pub metrics: Vec<MetricEntry>,
    #[serde(default)]
    pub metric_params: MetricParams,
    #[serde(default = "default_blur")]
    pub blur_kernel: usize,
    #[serde(default = "default_cohort")]
    pub cohort_size: usize,
    #[serde(default = "default_pilot")]
    pub pilot_size: usize,
    /// Training images offered to ExpectedGradients and DeepSHAP.
    #[serde(default = "default_references")]
    pub reference_pool: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub patch: PatchConfig,
    /// Patch target class, 0 when unset.
    #[serde(default)]
    pub patch_target: Option<usize>,
    #[serde(default)]
    pub pinned_metrics: Vec<String>,
    #[serde(default = "default_alpha_threshold")]
    pub alpha_threshold: f64,
    #[serde(default = "default_dedup_threshold")]
    pub dedup_threshold: f64,
    #[serde(default)]
    pub stability: StabilitySpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("invalid run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read run config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that every referenced id resolves and every count is usable.
    pub fn validate(&self) -> Result<()> {
        self.method_refs()?;
        self.baseline_ref()?;
        self.method_config.validate()?;
        self.metric_params.validate()?;
        if self.metrics.is_empty() {
            return Err(Error::config("no metrics configured"));
        }
        for m in &self.metrics {
            if m.masker.is_some() && !m.metric.uses_masker() {
                return Err(Error::config(format!("metric {} takes no masker", m.metric)));
            }
        }
        if self.blur_kernel.is_multiple_of(2) {
            return Err(Error::config("blur_kernel must be odd"));
        }
        if self.cohort_size == 0 || self.pilot_size == 0 {
            return Err(Error::config("cohort and pilot sizes must be positive"));
        }
        for key in &self.pinned_metrics {
            key.parse::<MetricEntry>()?;
        }
        self.stability.method.parse::<MethodRef>()?;
        Ok(())
    }

    /// Configured methods followed by the baseline, without duplicates.
    pub fn method_refs(&self) -> Result<Vec<MethodRef>> {
        let mut out: Vec<MethodRef> = Vec::new();
        for m in self.methods.iter().chain(std::iter::once(&self.baseline)) {
            let r = m.parse::<MethodRef>()?;
            if !out.contains(&r) {
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn baseline_ref(&self) -> Result<MethodRef> {
        self.baseline.parse()
    }

    /// Normalized metric entries (masker filled in), duplicates removed, config order kept.
    pub fn metric_entries(&self) -> Vec<MetricEntry> {
        let mut out: Vec<MetricEntry> = Vec::new();
        for m in &self.metrics {
            let e = MetricEntry {
                metric: m.metric,
                masker: m.masker_kind(),
            };
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }

    /// `output_dir`, resolved against the output-root variable when relative.
    pub fn output_path(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }
}
