use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DatasetSpec, MaskerKind, MethodRef, MetricEntry, ModelSpec, RunConfig};
use crate::attribution::{Explain, Explainer};
use crate::autodiff::container::{decode_tensors, encode_model, encode_tensors, load_model, save_model, NamedTensor};
use crate::autodiff::Model;
use crate::data::{accuracy, load_idx_raw, select_cohort, synth_generate, train_sgd, Dataset, Normalization};
use crate::error::{Error, Result};
use crate::masking::{Masker, Order};
use crate::metrics::{
    deletion, impact_coverage, infidelity, insertion, irof, max_sensitivity, minimal_subset,
    sensitivity_n, seg_sensitivity_n, train_patch, AdversarialPatch, Flag, MetricId, MetricResult,
    MinimalSubsetMode, Perturbation,
};
use crate::segmentation::{slic, Segmentation, SlicParams};
use crate::seed::derive;
use crate::tensor::Tensor;

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 over the shape and the little-endian payload.
pub fn tensor_digest(t: &Tensor) -> String {
    let mut h = Sha256::new();
    for &e in t.shape() {
        h.update((e as u64).to_le_bytes());
    }
    for v in t.data() {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Raw `[0, 1]` train and test splits.
pub fn load_raw_datasets(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synthetic {
            seed,
            train,
            test,
            size,
            classes,
        } => {
            if *train == 0 || *test == 0 {
                return Err(Error::config("synthetic train and test counts must be positive"));
            }
            synth_generate(*seed, train + test, *size, *classes)?.split_at(*train)
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx_raw(train_images, train_labels)?;
            let test = load_idx_raw(test_images, test_labels)?;
            if train.image_shape() != test.image_shape() {
                return Err(Error::Shape("train and test images differ in shape".into()));
            }
            let classes = train.classes().max(test.classes());
            let rebuild = |d: &Dataset| Dataset::new(d.images().clone(), d.labels().to_vec(), classes);
            Ok((rebuild(&train)?, rebuild(&test)?))
        }
    }
}

/// Normalized data and a trained (or loaded) model, shared by every command.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub normalization: Normalization,
    pub model: Model,
    pub model_digest: String,
    pub test_accuracy: f64,
    /// Per-epoch training loss; empty when the model was loaded.
    pub epoch_losses: Vec<f64>,
}

fn model_key(config: &RunConfig) -> String {
    let spec = serde_json::json!({ "dataset": config.dataset, "model": config.model });
    sha_hex(spec.to_string().as_bytes())
}

fn check_model(model: &Model, train: &Dataset) -> Result<()> {
    let (c, h, w) = train.image_shape();
    if model.input_shape() != [c, h, w] || model.classes() != train.classes() {
        return Err(Error::config(format!(
            "model expects input {:?} with {} classes; dataset has [{c}, {h}, {w}] with {}",
            model.input_shape(),
            model.classes(),
            train.classes()
        )));
    }
    Ok(())
}

/// Loads data, fits normalization on the training split and obtains the model.
/// A trained model is cached in the output directory under a key of the dataset
/// and model specs, so reruns with the same specs skip training.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let (raw_train, raw_test) = load_raw_datasets(&config.dataset)?;
    let normalization = raw_train.fit_normalization()?;
    let train = raw_train.normalized(&normalization)?;
    let test = raw_test.normalized(&normalization)?;
    let out = config.output_path();
    let (model, epoch_losses) = match &config.model {
        ModelSpec::Weights { path } => (load_model(path)?, Vec::new()),
        ModelSpec::Train {
            widths,
            init_seed,
            train: tc,
        } => {
            let key = model_key(config);
            let weights = out.join("model.attb");
            let key_path = out.join("model.key");
            let cached = fs::read_to_string(&key_path).ok().filter(|k| k.trim() == key);
            match cached {
                Some(_) if weights.exists() => (load_model(&weights)?, Vec::new()),
                _ => {
                    let (c, h, w) = train.image_shape();
                    let init = Model::small_cnn([c, h, w], train.classes(), *widths, *init_seed)?;
                    let (model, report) = train_sgd(&init, &train, tc)?;
                    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                    save_model(&weights, &model)?;
                    fs::write(&key_path, &key).map_err(|e| Error::io(&key_path, e))?;
                    (model, report.epoch_losses)
                }
            }
        }
    };
    check_model(&model, &train)?;
    let test_accuracy = accuracy(&model, &test)?;
    Ok(Prepared {
        config: config.clone(),
        model_digest: sha_hex(&encode_model(&model)),
        train,
        test,
        normalization,
        model,
        test_accuracy,
        epoch_losses,
    })
}

/// One correctly classified test image under evaluation.
#[derive(Debug, Clone)]
pub struct CohortImage {
    /// Index into the test split; the `image_id` of every output.
    pub id: usize,
    pub x: Tensor,
    pub class: usize,
    pub region: Option<Vec<bool>>,
}

/// Everything the scoring jobs read: model, cohort, segmentations, references, patch.
pub struct Bench {
    pub prepared: Prepared,
    pub images: Vec<CohortImage>,
    pub segmentations: Vec<Segmentation>,
    pub references: Vec<Tensor>,
    pub patch: Option<AdversarialPatch>,
}

impl Bench {
    /// Selects the first `cohort` correctly classified test images and precomputes
    /// what the configured metrics need.
    pub fn new(prepared: Prepared, cohort: usize, metrics: &[MetricEntry]) -> Result<Self> {
        let config = &prepared.config;
        let selected = select_cohort(&prepared.model, &prepared.test, cohort)?;
        let images: Vec<CohortImage> = selected
            .indices
            .iter()
            .zip(&selected.predicted)
            .map(|(&id, &class)| CohortImage {
                id,
                x: prepared.test.image(id),
                class,
                region: prepared.test.region(id).map(<[bool]>::to_vec),
            })
            .collect();
        let segmentations = if metrics.iter().any(|m| m.metric.needs_segmentation()) {
            let params = SlicParams::with_target(config.metric_params.segments);
            images
                .par_iter()
                .map(|img| slic(&img.x, &params))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let pool = config.reference_pool.min(prepared.train.len());
        let references: Vec<Tensor> = (0..pool).map(|i| prepared.train.image(i)).collect();
        let patch = if metrics.iter().any(|m| m.metric == MetricId::Cov) {
            Some(build_patch(&prepared)?)
        } else {
            None
        };
        Ok(Self {
            prepared,
            images,
            segmentations,
            references,
            patch,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.prepared.config
    }

    pub fn model(&self) -> &Model {
        &self.prepared.model
    }

    pub fn explainer(&self) -> Explainer<'_> {
        Explainer::new(&self.prepared.model, self.config().method_config.clone())
            .with_references(&self.references)
    }

    fn master(&self) -> u64 {
        self.config().seed
    }

    /// Seed of the attribution of `(image, method)`.
    pub fn attribution_seed(&self, image: usize, method: MethodRef) -> u64 {
        derive(self.master(), &format!("attribution/{}/{image}", method.id()))
    }

    /// Seed of a scoring job; shared by every method so they face the same draws.
    pub fn score_seed(&self, metric: &MetricEntry, image: usize, repeat: Option<usize>) -> u64 {
        match repeat {
            None => derive(self.master(), &format!("score/{}/{image}", metric.key())),
            Some(r) => derive(self.master(), &format!("score/{}/{image}/repeat{r}", metric.key())),
        }
    }

    pub fn masker(&self, kind: MaskerKind, image: usize) -> Masker {
        match kind {
            MaskerKind::Constant => Masker::DatasetMean,
            MaskerKind::Uniform => Masker::UniformRandom {
                seed: derive(self.master(), &format!("uniform/{image}")),
                normalization: self.prepared.normalization.clone(),
            },
            MaskerKind::Blur => Masker::Blur {
                kernel: self.config().blur_kernel,
            },
        }
    }
}

fn build_patch(prepared: &Prepared) -> Result<AdversarialPatch> {
    let config = &prepared.config;
    let target = config.patch_target.unwrap_or(0);
    let train: Vec<Tensor> = (0..prepared.train.len().min(512)).map(|i| prepared.train.image(i)).collect();
    let validation: Vec<Tensor> = (0..prepared.test.len().min(128)).map(|i| prepared.test.image(i)).collect();
    train_patch(
        &prepared.model,
        &train,
        &validation,
        target,
        &config.patch,
        &prepared.normalization,
    )
}

fn region_map(img: &CohortImage) -> Result<Tensor> {
    let region = img.region.as_ref().ok_or_else(|| {
        Error::config("region_oracle needs a dataset with ground-truth regions")
    })?;
    let (c, h, w) = img.x.image_dims()?;
    let plane: Vec<f64> = region.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
    Tensor::new(vec![c, h, w], plane.repeat(c))
}

/// Attribution maps computed once per (image, method), stored with their digests.
#[derive(Debug, Clone, Default)]
pub struct AttributionStore {
    entries: BTreeMap<(usize, MethodRef), (Tensor, String)>,
}

impl AttributionStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, image: usize, method: MethodRef, map: Tensor) {
        let digest = tensor_digest(&map);
        self.entries.insert((image, method), (map, digest));
    }

    /// The cached map; fails if it is missing or no longer matches its digest.
    pub fn get(&self, image: usize, method: MethodRef) -> Result<&Tensor> {
        let (map, digest) = self.entries.get(&(image, method)).ok_or_else(|| {
            Error::config(format!("no attribution cached for image {image}, method {}", method.id()))
        })?;
        if tensor_digest(map) != *digest {
            return Err(Error::Degenerate(format!(
                "cached attribution for image {image}, method {} fails its digest check",
                method.id()
            )));
        }
        Ok(map)
    }

    pub fn digests(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|((image, method), (_, d))| (format!("{image}/{}", method.id()), d.clone()))
            .collect()
    }

    /// ATTB store keyed `dataset/image/method/class`.
    pub fn encode(&self, dataset: &str, classes: &BTreeMap<usize, usize>) -> Vec<u8> {
        let entries: Vec<NamedTensor> = self
            .entries
            .iter()
            .map(|((image, method), (map, _))| NamedTensor {
                key: format!("{dataset}/{image}/{}/{}", method.id(), classes[image]),
                class: classes[image] as u32,
                tensor: map.clone(),
            })
            .collect();
        encode_tensors(&entries)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut store = Self::default();
        for e in decode_tensors(bytes)? {
            let parts: Vec<&str> = e.key.split('/').collect();
            let [_, image, method, _] = parts.as_slice() else {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("bad attribution key {:?}", e.key),
                });
            };
            let image: usize = image.parse().map_err(|_| Error::Format {
                offset: 0,
                message: format!("bad image id in key {:?}", e.key),
            })?;
            store.insert(image, method.parse()?, e.tensor);
        }
        Ok(store)
    }
}

/// Identifies everything an attribution depends on; cached maps are reused only
/// when this matches.
pub fn attribution_key(bench: &Bench) -> String {
    let c = bench.config();
    let spec = serde_json::json!({
        "model": bench.prepared.model_digest,
        "method_config": c.method_config,
        "reference_pool": c.reference_pool,
        "seed": c.seed,
    });
    sha_hex(spec.to_string().as_bytes())
}

/// Loads a cached store from `dir` when its key matches `key`.
pub fn load_store(dir: &Path, key: &str) -> Result<Option<AttributionStore>> {
    let key_path = dir.join("attributions.key");
    match fs::read_to_string(&key_path) {
        Ok(k) if k.trim() == key => {
            let path = dir.join("attributions.attb");
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            AttributionStore::decode(&bytes).map(Some)
        }
        _ => Ok(None),
    }
}

pub fn save_store(dir: &Path, key: &str, store: &AttributionStore, bench: &Bench) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let classes: BTreeMap<usize, usize> = bench.images.iter().map(|i| (i.id, i.class)).collect();
    let path = dir.join("attributions.attb");
    fs::write(&path, store.encode(bench.config().dataset.name(), &classes)).map_err(|e| Error::io(&path, e))?;
    let key_path = dir.join("attributions.key");
    fs::write(&key_path, key).map_err(|e| Error::io(&key_path, e))
}

/// Fills `store` with every missing (cohort image, method) map.
pub fn compute_attributions(bench: &Bench, methods: &[MethodRef], store: &mut AttributionStore) -> Result<()> {
    let explainer = bench.explainer();
    let jobs: Vec<(usize, MethodRef)> = bench
        .images
        .iter()
        .enumerate()
        .flat_map(|(i, img)| methods.iter().map(move |&m| (i, img.id, m)))
        .filter(|(_, id, m)| store.get(*id, *m).is_err())
        .map(|(i, _, m)| (i, m))
        .collect();
    let maps: Vec<Tensor> = jobs
        .par_iter()
        .map(|&(i, method)| {
            let img = &bench.images[i];
            match method {
                MethodRef::RegionOracle => region_map(img),
                MethodRef::Attribution(m) => Ok(explainer
                    .explain(m, &img.x, img.class, bench.attribution_seed(img.id, method))?
                    .values),
            }
        })
        .collect::<Result<_>>()?;
    for ((i, method), map) in jobs.into_iter().zip(maps) {
        store.insert(bench.images[i].id, method, map);
    }
    Ok(())
}

/// One line of the score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub image_id: usize,
    pub method: String,
    pub metric_id: String,
    pub masker: String,
    pub score: f64,
    pub flags: String,
}

impl ScoreRecord {
    /// `Del_MoRF/blur` style key.
    pub fn key(&self) -> String {
        if self.masker.is_empty() {
            self.metric_id.clone()
        } else {
            format!("{}/{}", self.metric_id, self.masker)
        }
    }

    pub fn excluded(&self) -> bool {
        self.flags == Flag::Degenerate.id() || self.flags == Flag::Skipped.id()
    }
}

/// Scores one (image, method, metric) job. `repeat` selects an independent stream
/// for stability studies.
pub fn score_job(
    bench: &Bench,
    explainer: &Explainer<'_>,
    store: &AttributionStore,
    image: usize,
    method: MethodRef,
    metric: &MetricEntry,
    repeat: Option<usize>,
) -> Result<MetricResult> {
    let img = &bench.images[image];
    let (x, c) = (&img.x, img.class);
    let e = store.get(img.id, method)?;
    let model = bench.model();
    let p = &bench.config().metric_params;
    let seed = bench.score_seed(metric, img.id, repeat);
    let masker = metric.masker_kind().map(|k| bench.masker(k, img.id));
    let masker = masker.as_ref().unwrap_or(&Masker::DatasetMean);
    let seg = || {
        bench
            .segmentations
            .get(image)
            .ok_or_else(|| Error::config("segmentation was not prepared"))
    };
    let ok = |v: f64| MetricResult::ok(v);
    let result = match metric.metric {
        MetricId::DelMoRF => ok(deletion(model, x, e, c, Order::MoRF, masker, p.steps, p.cap_fraction)?),
        MetricId::DelLeRF => ok(deletion(model, x, e, c, Order::LeRF, masker, p.steps, p.cap_fraction)?),
        MetricId::InsMoRF => ok(insertion(model, x, e, c, Order::MoRF, masker, p.steps, p.cap_fraction)?),
        MetricId::InsLeRF => ok(insertion(model, x, e, c, Order::LeRF, masker, p.steps, p.cap_fraction)?),
        MetricId::MsDel => minimal_subset(model, x, e, MinimalSubsetMode::Deletion, masker, p.ms_step)?,
        MetricId::MsIns => minimal_subset(model, x, e, MinimalSubsetMode::Insertion, masker, p.ms_step)?,
        MetricId::IrofMoRF => ok(irof(model, x, e, c, Order::MoRF, masker, seg()?)?),
        MetricId::IrofLeRF => ok(irof(model, x, e, c, Order::LeRF, masker, seg()?)?),
        MetricId::SensN => {
            let (_, h, w) = x.image_dims()?;
            sensitivity_n(model, x, e, c, p.sens_n(h * w), p.subsets, masker, seed)?
        }
        MetricId::SegSensN => {
            let s = seg()?;
            seg_sensitivity_n(model, x, e, c, s, p.seg_sens_n(s.count()), p.subsets, masker, seed)?
        }
        MetricId::InfdNB => infidelity(
            model,
            x,
            e,
            c,
            Perturbation::NoisyBaseline {
                sigma: p.infidelity_sigma,
            },
            p.infidelity_samples,
            seed,
        )?,
        MetricId::InfdSQ => {
            let (_, h, w) = x.image_dims()?;
            let side = h.min(w).div_ceil(4);
            infidelity(model, x, e, c, Perturbation::Square { side }, p.infidelity_samples, seed)?
        }
        MetricId::SensMax | MetricId::Cov => {
            let fixed = |_: &Tensor, _: usize| -> Result<Tensor> { Ok(e.clone()) };
            let bound;
            let explain: &dyn Explain = match method {
                MethodRef::Attribution(m) => {
                    bound = explainer.bind(m, bench.attribution_seed(img.id, method));
                    &bound
                }
                MethodRef::RegionOracle => &fixed,
            };
            if metric.metric == MetricId::SensMax {
                max_sensitivity(explain, x, c, p.max_sens_radius, p.max_sens_samples, seed)?
            } else {
                let patch = bench
                    .patch
                    .as_ref()
                    .ok_or_else(|| Error::config("impact coverage needs a trained patch"))?;
                impact_coverage(model, x, explain, patch, seed)?
            }
        }
    };
    if result.flag == Flag::None && !result.score.is_finite() {
        return Ok(MetricResult::flagged(result.score, Flag::Degenerate));
    }
    Ok(result)
}

/// Scores every (image, method, metric) combination in parallel; output order is
/// image, then method, then metric, independent of scheduling.
pub fn score_all(
    bench: &Bench,
    store: &AttributionStore,
    methods: &[MethodRef],
    metrics: &[MetricEntry],
) -> Result<Vec<ScoreRecord>> {
    let explainer = bench.explainer();
    let jobs: Vec<(usize, MethodRef, MetricEntry)> = (0..bench.images.len())
        .flat_map(|i| methods.iter().flat_map(move |&m| metrics.iter().map(move |&k| (i, m, k))))
        .collect();
    jobs.par_iter()
        .map(|(i, method, metric)| {
            let r = score_job(bench, &explainer, store, *i, *method, metric, None)?;
            Ok(ScoreRecord {
                image_id: bench.images[*i].id,
                method: method.id().to_string(),
                metric_id: metric.metric.id().to_string(),
                masker: metric.masker_kind().map(|k| k.id().to_string()).unwrap_or_default(),
                score: r.score,
                flags: r.flag.id().to_string(),
            })
        })
        .collect()
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One table per metric key, in first-appearance order.
pub fn score_tables(records: &[ScoreRecord]) -> Result<Vec<crate::stats::ScoreTable>> {
    let mut keys: Vec<String> = Vec::new();
    for r in records {
        let k = r.key();
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.iter()
        .map(|key| {
            let entry: MetricEntry = key.parse()?;
            Ok(crate::stats::ScoreTable::from_records(
                key.clone(),
                entry.metric.higher_is_better(),
                records
                    .iter()
                    .filter(|r| r.key() == *key)
                    .map(|r| (r.image_id, r.method.as_str(), r.score, r.excluded())),
            ))
        })
        .collect()
}
