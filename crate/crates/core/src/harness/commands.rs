use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{MethodRef, MetricEntry, RunConfig};
use super::pilot::{select_metrics, table_alphas, PilotReport};
use super::pipeline::{
    attribution_key, compute_attributions, load_store, prepare, read_scores, save_store, score_all, score_job,
    score_tables, write_scores, AttributionStore, Bench, ScoreRecord,
};
use super::svg;
use crate::error::{Error, Result};
use crate::metrics::MetricId;
use crate::stats::{
    cles, inter_metric_correlation, krippendorff_alpha, significance_grid, stability_analysis,
    wilcoxon_signed_rank, Alternative, CorrelationMatrix, ScoreTable, SignificanceGrid, ALPHA,
};

/// Smallest cohort the pilot accepts; fewer images cannot reach significance.
pub const MIN_PILOT: usize = 10;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_digest: String,
    pub test_accuracy: f64,
    /// Empty when a cached or supplied model was used.
    pub epoch_losses: Vec<f64>,
    pub model_path: PathBuf,
}

/// Trains (or loads) the model and records its test accuracy.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    let prepared = prepare(config)?;
    let out = config.output_path();
    ensure_dir(&out)?;
    let summary = TrainSummary {
        model_digest: prepared.model_digest.clone(),
        test_accuracy: prepared.test_accuracy,
        epoch_losses: prepared.epoch_losses.clone(),
        model_path: match &config.model {
            super::config::ModelSpec::Weights { path } => path.clone(),
            _ => out.join("model.attb"),
        },
    };
    write_json(&out.join("train.json"), &summary)?;
    Ok(summary)
}

/// Builds the bench and fills the attribution store (reusing the on-disk cache when valid).
fn bench_with_maps(
    config: &RunConfig,
    cohort: usize,
    methods: &[MethodRef],
    metrics: &[MetricEntry],
) -> Result<(Bench, AttributionStore)> {
    let prepared = prepare(config)?;
    let bench = Bench::new(prepared, cohort, metrics)?;
    let out = config.output_path();
    let key = attribution_key(&bench);
    let mut store = load_store(&out, &key)?.unwrap_or_default();
    let before = store.len();
    compute_attributions(&bench, methods, &mut store)?;
    if store.len() != before {
        save_store(&out, &key, &store, &bench)?;
    }
    Ok((bench, store))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub cohort: Vec<usize>,
    pub methods: Vec<String>,
    /// `image/method` -> SHA-256 of the map.
    pub digests: BTreeMap<String, String>,
}

/// Computes every configured method's map on the cohort and persists the store.
pub fn cmd_attribute(config: &RunConfig) -> Result<AttributionSummary> {
    let methods = config.method_refs()?;
    let (bench, store) = bench_with_maps(config, config.cohort_size, &methods, &[])?;
    let summary = AttributionSummary {
        cohort: bench.images.iter().map(|i| i.id).collect(),
        methods: methods.iter().map(|m| m.id().to_string()).collect(),
        digests: store.digests(),
    };
    write_json(&config.output_path().join("attributions.json"), &summary)?;
    Ok(summary)
}

fn baseline_ids(methods: &[MethodRef]) -> Vec<&'static str> {
    methods
        .iter()
        .filter(|m| matches!(m, MethodRef::Attribution(a) if a.is_baseline()))
        .map(|m| m.id())
        .collect()
}

/// Scores all configured metrics on a small cohort, then filters by α and dedups by ρ.
pub fn cmd_pilot(config: &RunConfig, size: Option<usize>) -> Result<PilotReport> {
    let size = size.unwrap_or(config.pilot_size);
    if size < MIN_PILOT {
        return Err(Error::config(format!("pilot cohort of {size} images is too small (minimum {MIN_PILOT})")));
    }
    let methods = config.method_refs()?;
    let metrics = config.metric_entries();
    let (bench, store) = bench_with_maps(config, size, &methods, &metrics)?;
    let records = score_all(&bench, &store, &methods, &metrics)?;
    let out = config.output_path();
    write_scores(&out.join("pilot_scores.csv"), &records)?;
    let tables = score_tables(&records)?;
    let correlation = inter_metric_correlation(&tables, &baseline_ids(&methods));
    let report = select_metrics(
        &table_alphas(&tables),
        correlation,
        &config.pinned_metrics,
        config.alpha_threshold,
        config.dedup_threshold,
    );
    write_json(&out.join("pilot.json"), &report)?;
    Ok(report)
}

/// A metric, (method or image) left out of the statistics, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_id: Option<usize>,
    pub code: String,
}

fn exclusions(records: &[ScoreRecord], tables: &[ScoreTable], grid: &SignificanceGrid, weak_patch: bool) -> Vec<Exclusion> {
    let mut out = Vec::new();
    for r in records {
        if r.excluded() {
            out.push(Exclusion {
                metric: r.key(),
                method: Some(r.method.clone()),
                image_id: Some(r.image_id),
                code: r.flags.to_uppercase(),
            });
        } else if !r.score.is_finite() {
            out.push(Exclusion {
                metric: r.key(),
                method: Some(r.method.clone()),
                image_id: Some(r.image_id),
                code: "NON_FINITE".into(),
            });
        }
    }
    for t in tables {
        if t.dropped() > 0 {
            let images: std::collections::BTreeSet<usize> = records
                .iter()
                .filter(|r| r.key() == t.metric())
                .map(|r| r.image_id)
                .filter(|id| t.image_index(*id).is_none())
                .collect();
            for id in images {
                out.push(Exclusion {
                    metric: t.metric().into(),
                    method: None,
                    image_id: Some(id),
                    code: "IMAGE_DROPPED".into(),
                });
            }
        }
        if t.images().is_empty() {
            out.push(Exclusion {
                metric: t.metric().into(),
                method: None,
                image_id: None,
                code: "NO_COMPLETE_IMAGES".into(),
            });
        }
        if weak_patch && t.metric() == MetricId::Cov.id() {
            out.push(Exclusion {
                metric: t.metric().into(),
                method: None,
                image_id: None,
                code: "WEAK_PATCH".into(),
            });
        }
    }
    for c in &grid.cells {
        if c.outcome.is_none() && c.method != grid.baseline {
            out.push(Exclusion {
                metric: c.metric.clone(),
                method: Some(c.method.clone()),
                image_id: None,
                code: "UNTESTABLE".into(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub target: usize,
    pub side: usize,
    pub success_rate: f64,
    pub history: Vec<f64>,
    pub weak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub metrics: Vec<String>,
    pub metric_source: String,
    pub methods: Vec<String>,
    pub normalization: crate::data::Normalization,
    pub model_digest: String,
    pub test_accuracy: f64,
    pub cohort: Vec<usize>,
    pub attribution_seeds: BTreeMap<String, u64>,
    pub score_seeds: BTreeMap<String, u64>,
    pub masker_seeds: BTreeMap<String, u64>,
    pub attribution_digests: BTreeMap<String, String>,
    pub patch: Option<PatchSummary>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub grid: SignificanceGrid,
    pub alphas: BTreeMap<String, Option<f64>>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub records: Vec<ScoreRecord>,
    pub tables: Vec<ScoreTable>,
    pub report: BenchmarkReport,
    pub output_dir: PathBuf,
}

/// Where the benchmark's metric list comes from: explicit, the pilot, or the config.
fn benchmark_metrics(config: &RunConfig, explicit: Option<Vec<MetricEntry>>) -> Result<(Vec<MetricEntry>, String)> {
    if let Some(m) = explicit {
        if m.is_empty() {
            return Err(Error::config("empty metric selection"));
        }
        return Ok((m, "explicit".into()));
    }
    let pilot = config.output_path().join("pilot.json");
    if pilot.exists() {
        let report: PilotReport = read_json(&pilot)?;
        let selected: Vec<MetricEntry> =
            report.selected().iter().map(|k| k.parse()).collect::<Result<_>>()?;
        if !selected.is_empty() {
            return Ok((selected, "pilot".into()));
        }
    }
    Ok((config.metric_entries(), "config".into()))
}

fn manifest(bench: &Bench, store: &AttributionStore, command: &str, methods: &[MethodRef], metrics: &[MetricEntry], source: &str, outputs: &[&str]) -> Manifest {
    let mut attribution_seeds = BTreeMap::new();
    let mut score_seeds = BTreeMap::new();
    let mut masker_seeds = BTreeMap::new();
    for img in &bench.images {
        for &m in methods {
            attribution_seeds.insert(format!("{}/{}", img.id, m.id()), bench.attribution_seed(img.id, m));
        }
        for k in metrics {
            score_seeds.insert(format!("{}/{}", img.id, k.key()), bench.score_seed(k, img.id, None));
        }
        if let crate::masking::Masker::UniformRandom { seed, .. } =
            bench.masker(super::config::MaskerKind::Uniform, img.id)
        {
            masker_seeds.insert(img.id.to_string(), seed);
        }
    }
    let p = &bench.prepared;
    Manifest {
        command: command.into(),
        config: p.config.clone(),
        metrics: metrics.iter().map(MetricEntry::key).collect(),
        metric_source: source.into(),
        methods: methods.iter().map(|m| m.id().to_string()).collect(),
        normalization: p.normalization.clone(),
        model_digest: p.model_digest.clone(),
        test_accuracy: p.test_accuracy,
        cohort: bench.images.iter().map(|i| i.id).collect(),
        attribution_seeds,
        score_seeds,
        masker_seeds,
        attribution_digests: store.digests(),
        patch: bench.patch.as_ref().map(|pt| PatchSummary {
            target: pt.target,
            side: pt.side(),
            success_rate: pt.success_rate,
            history: pt.history.clone(),
            weak: pt.is_weak(),
        }),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

/// Full-cohort scores, significance grid against the baseline, manifest and SVG grid.
pub fn cmd_benchmark(config: &RunConfig, metrics: Option<Vec<MetricEntry>>) -> Result<BenchmarkOutcome> {
    let (metrics, source) = benchmark_metrics(config, metrics)?;
    let methods = config.method_refs()?;
    let baseline = config.baseline_ref()?;
    let (bench, store) = bench_with_maps(config, config.cohort_size, &methods, &metrics)?;
    let records = score_all(&bench, &store, &methods, &metrics)?;
    let out = config.output_path();
    write_scores(&out.join("scores.csv"), &records)?;
    let tables = score_tables(&records)?;
    let grid = significance_grid(&tables, baseline.id())?;
    let weak = bench.patch.as_ref().is_some_and(|p| p.is_weak());
    let report = BenchmarkReport {
        alphas: table_alphas(&tables).into_iter().collect(),
        exclusions: exclusions(&records, &tables, &grid, weak),
        grid,
    };
    write_json(&out.join("benchmark.json"), &report)?;
    write_text(&out.join("grid.svg"), &svg::grid_svg(&report.grid))?;
    let m = manifest(
        &bench,
        &store,
        "benchmark",
        &methods,
        &metrics,
        &source,
        &["scores.csv", "benchmark.json", "grid.svg", "attributions.attb"],
    );
    write_json(&out.join("manifest.json"), &m)?;
    Ok(BenchmarkOutcome {
        records,
        tables,
        report,
        output_dir: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub metric: String,
    /// Share of images where A beats B in the metric's good direction.
    pub cles: f64,
    /// Two-sided signed-rank p; `None` with too few non-zero differences.
    pub p_value: Option<f64>,
    pub significant: bool,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub a: String,
    pub b: String,
    pub rows: Vec<CompareRow>,
}

/// Paired comparison of two methods on every table that contains both.
pub fn compare_tables(tables: &[ScoreTable], a: &str, b: &str) -> Result<CompareReport> {
    let mut rows = Vec::new();
    for t in tables {
        let (Some(sa), Some(sb)) = (t.column(a), t.column(b)) else {
            return Err(Error::config(format!("{} lacks scores for {a} or {b}", t.metric())));
        };
        let p_value = match (
            wilcoxon_signed_rank(&sa, &sb, Alternative::Greater),
            wilcoxon_signed_rank(&sa, &sb, Alternative::Less),
        ) {
            (Ok(g), Ok(l)) => Some((2.0 * g.p_value.min(l.p_value)).min(1.0)),
            _ => None,
        };
        rows.push(CompareRow {
            metric: t.metric().to_string(),
            cles: cles(&sa, &sb, t.higher_is_better()),
            significant: p_value.is_some_and(|p| p < ALPHA),
            p_value,
            images: sa.len(),
        });
    }
    Ok(CompareReport {
        a: a.to_string(),
        b: b.to_string(),
        rows,
    })
}

/// Compares A and B using the benchmark's scores when they hold both methods,
/// otherwise scores the two methods afresh on the cohort.
pub fn cmd_compare(config: &RunConfig, a: &str, b: &str, metrics: Option<Vec<MetricEntry>>) -> Result<CompareReport> {
    let ma: MethodRef = a.parse()?;
    let mb: MethodRef = b.parse()?;
    let out = config.output_path();
    let scores = out.join("scores.csv");
    let wanted: Option<Vec<String>> = metrics.as_ref().map(|m| m.iter().map(MetricEntry::key).collect());
    let existing: Option<Vec<ScoreRecord>> = if scores.exists() {
        let all = read_scores(&scores)?;
        let keep: Vec<ScoreRecord> = all
            .into_iter()
            .filter(|r| r.method == ma.id() || r.method == mb.id())
            .filter(|r| wanted.as_ref().is_none_or(|w| w.contains(&r.key())))
            .collect();
        let has = |m: &str| keep.iter().any(|r| r.method == m);
        let covers = wanted
            .as_ref()
            .is_none_or(|w| w.iter().all(|k| keep.iter().any(|r| r.key() == *k)));
        (has(ma.id()) && has(mb.id()) && covers).then_some(keep)
    } else {
        None
    };
    let records = match existing {
        Some(r) => r,
        None => {
            let metrics = metrics.unwrap_or_else(|| config.metric_entries());
            let methods = if ma == mb { vec![ma] } else { vec![ma, mb] };
            let (bench, store) = bench_with_maps(config, config.cohort_size, &methods, &metrics)?;
            score_all(&bench, &store, &methods, &metrics)?
        }
    };
    let tables = score_tables(&records)?;
    let report = compare_tables(&tables, ma.id(), mb.id())?;
    let stem = format!("compare_{}_{}", ma.id(), mb.id());
    write_json(&out.join(format!("{stem}.json")), &report)?;
    write_text(&out.join(format!("{stem}.svg")), &svg::cles_svg(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub metric: String,
    pub median_snr: f64,
    pub noise_fraction: f64,
    pub images: Vec<usize>,
    /// Per-image SNR, aligned with `images`.
    pub snr: Vec<f64>,
    /// Images removed because a repeat was flagged.
    pub dropped: usize,
}

/// One-sided test that metric `a` has higher per-image SNR than `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrComparison {
    pub a: String,
    pub b: String,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityStudy {
    pub method: String,
    pub repeats: usize,
    pub rows: Vec<StabilityRow>,
    pub comparisons: Vec<SnrComparison>,
}

impl StabilityStudy {
    pub fn row(&self, metric: &str) -> Option<&StabilityRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&SnrComparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }
}

/// Repeats each stochastic metric with independent streams on fixed maps.
pub fn cmd_stability(
    config: &RunConfig,
    metrics: Option<Vec<MetricEntry>>,
    repeats: Option<usize>,
) -> Result<StabilityStudy> {
    let repeats = repeats.unwrap_or(config.stability.repeats);
    if repeats < 2 {
        return Err(Error::config(format!(
            "stability needs at least 2 repeats to estimate variance, got {repeats}"
        )));
    }
    let metrics = match metrics {
        Some(m) => m,
        None => config.metric_entries().into_iter().filter(|m| m.metric.is_stochastic()).collect(),
    };
    if metrics.is_empty() {
        return Err(Error::config("no stochastic metric to study; choose Sens_n, SegSens_n, INFD_NB, INFD_SQ, SENS_MAX or COV"));
    }
    if let Some(m) = metrics.iter().find(|m| !m.metric.is_stochastic()) {
        return Err(Error::config(format!(
            "{} is deterministic, so repeated runs have zero variance; choose Sens_n, SegSens_n, INFD_NB, INFD_SQ, SENS_MAX or COV",
            m.key()
        )));
    }
    let method: MethodRef = config.stability.method.parse()?;
    let cohort = config.stability.images.unwrap_or(config.cohort_size);
    let (bench, store) = bench_with_maps(config, cohort, &[method], &metrics)?;
    let explainer = bench.explainer();
    let jobs: Vec<(usize, usize, usize)> = (0..metrics.len())
        .flat_map(|k| (0..bench.images.len()).flat_map(move |i| (0..repeats).map(move |r| (k, i, r))))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, i, r)| score_job(&bench, &explainer, &store, i, method, &metrics[k], Some(r)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (k, metric) in metrics.iter().enumerate() {
        let mut images = Vec::new();
        let mut scores = Vec::new();
        let mut dropped = 0;
        for (i, img) in bench.images.iter().enumerate() {
            let start = (k * bench.images.len() + i) * repeats;
            let rs = &results[start..start + repeats];
            if rs.iter().any(|r| r.flag.excludes() || !r.score.is_finite()) {
                dropped += 1;
                continue;
            }
            images.push(img.id);
            scores.push(rs.iter().map(|r| r.score).collect::<Vec<f64>>());
        }
        if scores.is_empty() {
            return Err(Error::Degenerate(format!("{} was undefined on every image", metric.key())));
        }
        let analysis = stability_analysis(&scores)?;
        rows.push(StabilityRow {
            metric: metric.key(),
            median_snr: analysis.median_snr(),
            noise_fraction: analysis.noise_fraction,
            images,
            snr: analysis.snr,
            dropped,
        });
    }

    let mut comparisons = Vec::new();
    for a in &rows {
        for b in &rows {
            if a.metric == b.metric {
                continue;
            }
            let (mut xa, mut xb) = (Vec::new(), Vec::new());
            for (i, id) in a.images.iter().enumerate() {
                if let Some(j) = b.images.iter().position(|x| x == id) {
                    // Zero-variance images have infinite SNR; the largest float keeps their rank.
                    xa.push(a.snr[i].min(f64::MAX));
                    xb.push(b.snr[j].min(f64::MAX));
                }
            }
            let p = wilcoxon_signed_rank(&xa, &xb, Alternative::Greater).ok().map(|o| o.p_value);
            comparisons.push(SnrComparison {
                a: a.metric.clone(),
                b: b.metric.clone(),
                significant: p.is_some_and(|p| p < ALPHA),
                p_value: p,
            });
        }
    }

    let study = StabilityStudy {
        method: method.id().to_string(),
        repeats,
        rows,
        comparisons,
    };
    let out = config.output_path();
    write_json(&out.join("stability.json"), &study)?;
    let mut w = csv::Writer::from_path(out.join("stability.csv"))?;
    w.write_record(["metric", "image_id", "snr"])?;
    for r in &study.rows {
        for (id, s) in r.images.iter().zip(&r.snr) {
            w.write_record([r.metric.clone(), id.to_string(), s.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    write_text(&out.join("stability.svg"), &svg::stability_svg(&study.rows))?;
    Ok(study)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub baseline: String,
    pub alphas: BTreeMap<String, Option<f64>>,
    pub correlation: CorrelationMatrix,
    pub grid: SignificanceGrid,
    /// Best method per metric, when any beat the baseline.
    pub best: BTreeMap<String, Option<String>>,
}

/// Rebuilds statistics and plots from an existing `scores.csv`.
pub fn cmd_report(config: &RunConfig) -> Result<RunReport> {
    let out = config.output_path();
    let records = read_scores(&out.join("scores.csv"))?;
    let tables = score_tables(&records)?;
    let methods = config.method_refs()?;
    let grid = significance_grid(&tables, config.baseline_ref()?.id())?;
    let report = RunReport {
        baseline: grid.baseline.clone(),
        alphas: tables.iter().map(|t| (t.metric().to_string(), krippendorff_alpha(t))).collect(),
        correlation: inter_metric_correlation(&tables, &baseline_ids(&methods)),
        best: grid
            .metrics
            .iter()
            .map(|m| (m.clone(), grid.best(m).map(str::to_string)))
            .collect(),
        grid,
    };
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.md"), &report_markdown(&report, &tables))?;
    write_text(&out.join("grid.svg"), &svg::grid_svg(&report.grid))?;
    Ok(report)
}

fn report_markdown(report: &RunReport, tables: &[ScoreTable]) -> String {
    let mut s = String::from("| metric | images | dropped | alpha | significant methods | best |\n|---|---|---|---|---|---|\n");
    for t in tables {
        let sig: Vec<&str> = report
            .grid
            .cells
            .iter()
            .filter(|c| c.metric == t.metric() && c.outcome.as_ref().is_some_and(|o| o.significant))
            .map(|c| c.method.as_str())
            .collect();
        let alpha = report.alphas[t.metric()].map_or("-".to_string(), |a| format!("{a:.3}"));
        let best = report.best[t.metric()].as_deref().unwrap_or("-");
        s.push_str(&format!(
            "| {} | {} | {} | {alpha} | {} | {best} |\n",
            t.metric(),
            t.images().len(),
            t.dropped(),
            if sig.is_empty() { "-".to_string() } else { sig.join(", ") }
        ));
    }
    s
}

