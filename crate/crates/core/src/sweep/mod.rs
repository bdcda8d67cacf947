//! Layer-wise and reduced-dimension probing experiments.
//!
//! A sweep trains one probe per cell (a model layer, or a PCA width of one
//! layer) with the same training config and seed, scores it on the test
//! split, marks the best cell per model and tests the best cell of every
//! model against the MFCC baseline.

pub mod reference;
pub mod render;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::{FeatureSource, ModelId, Source, StoreError};
use crate::manifest::{DatasetManifest, ManifestError, Split, Task, TaskSpec};
use crate::nn::{self, TrainConfig};
use crate::pca::{fit_pca_on_matrices, pca_sweep_dims, PcaError, PcaModel, MAX_FIT_FRAMES};
use crate::stats::{compare_to_baseline, compute_metrics, EvalReport, PairingSpec, WilcoxonResult};
use reference::{best_k_reference, best_layer_reference, ReferenceCorpus};

pub use render::{csv_string, render_report, render_svg, CSV_COLUMNS};

pub const MFCC_NAME: &str = "mfcc";

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report error: {0}")]
    Report(String),
}

/// One SSL model and the layers to probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub model: ModelId,
    pub layers: Vec<i16>,
}

impl SystemSpec {
    pub fn all_layers(model: ModelId) -> Self {
        SystemSpec { model, layers: (0..model.spec().n_layers as i16).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPlan {
    /// The layer to reduce, per model.
    pub best_layers: Vec<(ModelId, i16)>,
    /// Widths to try; `None` means [`pca_sweep_dims`]. The full width is
    /// always added as a control.
    pub ks: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub task: Task,
    /// Train the MFCC baseline and test every model's best cell against it.
    pub include_mfcc: bool,
    pub systems: Vec<SystemSpec>,
    pub pca: Option<PcaPlan>,
    pub train: TrainConfig,
    pub pairing: PairingSpec,
    /// Overrides the seeds in `train` and `pairing`.
    pub seed: u64,
    /// Worker threads for cells.
    pub jobs: usize,
    /// Attach published accuracies when the dataset is a known reference corpus.
    pub annotate: bool,
}

impl SweepPlan {
    pub fn new(task: Task) -> Self {
        SweepPlan {
            task,
            include_mfcc: true,
            systems: Vec::new(),
            pca: None,
            train: TrainConfig::default(),
            pairing: PairingSpec::default(),
            seed: 0,
            jobs: 1,
            annotate: true,
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    fn pairing(&self) -> PairingSpec {
        PairingSpec { seed: self.seed, ..self.pairing.clone() }
    }

    fn validate(&self, manifest: &DatasetManifest) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidPlan(m));
        manifest.validate()?;
        self.train_config().validate().map_err(|e| SweepError::InvalidPlan(e.to_string()))?;
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        for split in [Split::Train, Split::Test] {
            if manifest.split(split).next().is_none() {
                return bad(format!("manifest has no {} utterances", split.as_str()));
            }
        }
        let mut seen = BTreeSet::new();
        for s in &self.systems {
            if !seen.insert(s.model) {
                return bad(format!("model {} listed twice", s.model.name()));
            }
            if s.layers.is_empty() {
                return bad(format!("no layers for {}", s.model.name()));
            }
            let mut layers = BTreeSet::new();
            for &l in &s.layers {
                if !Source::Ssl(s.model).layer_valid(l) {
                    return bad(format!("layer {l} outside 0..{} for {}", s.model.spec().n_layers, s.model.name()));
                }
                if !layers.insert(l) {
                    return bad(format!("layer {l} listed twice for {}", s.model.name()));
                }
            }
        }
        if let Some(pca) = &self.pca {
            for &(m, l) in &pca.best_layers {
                if !Source::Ssl(m).layer_valid(l) {
                    return bad(format!("layer {l} outside 0..{} for {}", m.spec().n_layers, m.name()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Layers,
    Pca,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Layers => "layers",
            SweepKind::Pca => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Model name, or [`MFCC_NAME`].
    pub model: String,
    pub layer: Option<i16>,
    pub k: Option<usize>,
    /// `None` when the cell failed; see `error`.
    pub metrics: Option<EvalReport>,
    pub error: Option<String>,
    pub best_epoch: Option<usize>,
    pub is_best: bool,
    /// Published accuracy (fraction) for this system, on best rows only.
    pub reference_accuracy: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    /// Per test utterance, in manifest order. Not persisted.
    #[serde(skip)]
    pub correct: Vec<bool>,
}

impl SweepRow {
    pub fn accuracy(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub model: String,
    pub layer: Option<i16>,
    pub k: Option<usize>,
    pub result: Option<WilcoxonResult>,
    /// Why no result, e.g. "no difference".
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub train: TrainConfig,
    pub pairing: PairingSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub tool_version: String,
    pub created_unix_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub dataset: String,
    pub task: Task,
    pub rows: Vec<SweepRow>,
    pub comparisons: Vec<BaselineComparison>,
    pub provenance: Provenance,
}

impl SweepReport {
    pub fn best_row(&self, model: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.is_best && r.model == model)
    }

    pub fn baseline(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.model == MFCC_NAME)
    }

    /// Model names other than the baseline, in row order.
    pub fn models(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if r.model != MFCC_NAME && !out.contains(&r.model.as_str()) {
                out.push(&r.model);
            }
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<(), SweepError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| SweepError::Report(e.to_string()))?;
        fs::write(path, text).map_err(|source| SweepError::Io { path: path.display().to_string(), source })
    }

    pub fn load_json(path: &Path) -> Result<Self, SweepError> {
        let text = fs::read_to_string(path).map_err(|source| SweepError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| SweepError::Report(format!("{}: {e}", path.display())))
    }
}

/// Labels and ids of both splits, in manifest order.
struct Prepared<'a> {
    train_ids: Vec<&'a str>,
    test_ids: Vec<&'a str>,
    y_train: Vec<usize>,
    y_test: Vec<usize>,
    n_classes: usize,
}

impl<'a> Prepared<'a> {
    fn new(manifest: &'a DatasetManifest, task: Task) -> Self {
        let spec = TaskSpec::for_manifest(task, manifest);
        let pick = |split| -> (Vec<&'a str>, Vec<usize>) {
            manifest.split(split).map(|e| (e.utterance_id.as_str(), spec.label(e))).unzip()
        };
        let (train_ids, y_train) = pick(Split::Train);
        let (test_ids, y_test) = pick(Split::Test);
        Prepared { train_ids, test_ids, y_train, y_test, n_classes: spec.n_classes }
    }

    fn all_ids(&self) -> Vec<&'a str> {
        self.train_ids.iter().chain(&self.test_ids).copied().collect()
    }

    fn load(&self, features: &dyn FeatureSource, source: Source, layer: i16) -> Result<(Vec<Array2<f32>>, Vec<Array2<f32>>), StoreError> {
        let mut all = features.load_many(&self.all_ids(), source, layer)?;
        let test = all.split_off(self.train_ids.len());
        Ok((all, test))
    }
}

struct CellOutcome {
    metrics: EvalReport,
    correct: Vec<bool>,
    best_epoch: usize,
}

fn train_and_score(
    train_x: &[Array2<f32>],
    test_x: &[Array2<f32>],
    prep: &Prepared,
    cfg: &TrainConfig,
) -> Result<CellOutcome, String> {
    let (model, trace) = nn::train(train_x, &prep.y_train, prep.n_classes, cfg).map_err(|e| e.to_string())?;
    let views: Vec<_> = test_x.iter().map(|x| x.view()).collect();
    let preds = model.predict_many(&views, 64).map_err(|e| e.to_string())?;
    let pairs: Vec<(usize, usize)> = prep.y_test.iter().copied().zip(preds).collect();
    let metrics = compute_metrics(&pairs, prep.n_classes).map_err(|e| e.to_string())?;
    if metrics.has_empty_denominator() {
        log::warn!("classes {:?} never predicted; their precision counts as 0", metrics.unpredicted_classes);
    }
    let correct = pairs.iter().map(|(t, p)| t == p).collect();
    Ok(CellOutcome { metrics, correct, best_epoch: trace.best_epoch })
}

fn config_hash(dataset: &str, task: Task, model: &str, layer: Option<i16>, k: Option<usize>, cfg: &TrainConfig) -> String {
    let canonical = serde_json::json!({
        "dataset": dataset,
        "task": task,
        "model": model,
        "layer": layer,
        "k": k,
        "train": cfg,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A cell to run: where its features come from and an optional PCA width.
#[derive(Debug, Clone, Copy)]
struct Cell {
    source: Source,
    layer: i16,
    k: Option<usize>,
}

impl Cell {
    fn model_name(&self) -> &'static str {
        self.source.name()
    }

    fn row_layer(&self) -> Option<i16> {
        (self.source != Source::Mfcc).then_some(self.layer)
    }
}

fn make_row(dataset: &str, plan: &SweepPlan, cell: &Cell, outcome: Result<CellOutcome, String>) -> SweepRow {
    let cfg = plan.train_config();
    let layer = cell.row_layer();
    let config_hash = config_hash(dataset, plan.task, cell.model_name(), layer, cell.k, &cfg);
    let (metrics, correct, best_epoch, error) = match outcome {
        Ok(o) => (Some(o.metrics), o.correct, Some(o.best_epoch), None),
        Err(e) => {
            log::warn!("cell {} L{:?} k{:?} failed: {e}", cell.model_name(), layer, cell.k);
            (None, Vec::new(), None, Some(e))
        }
    };
    SweepRow {
        model: cell.model_name().to_string(),
        layer,
        k: cell.k,
        metrics,
        error,
        best_epoch,
        is_best: false,
        reference_accuracy: None,
        seed: plan.seed,
        config_hash,
        correct,
    }
}

fn preflight(features: &dyn FeatureSource, prep: &Prepared, cells: &[(Source, i16)]) -> Result<(), SweepError> {
    let ids = prep.all_ids();
    let mut missing = BTreeSet::new();
    for &(source, layer) in cells {
        for id in features.missing(&ids, source, layer) {
            missing.insert(format!("{id} ({source} L{layer})"));
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(StoreError::MissingFeature(missing.into_iter().collect()).into())
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, SweepError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SweepError::InvalidPlan(format!("worker pool: {e}")))
}

/// Best row per model: highest accuracy, ties to the lower layer (or lower
/// width in a PCA report). The MFCC row is its own system.
fn mark_best(rows: &mut [SweepRow], kind: SweepKind) {
    let mut models: Vec<String> = Vec::new();
    for r in rows.iter() {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    for model in models {
        let eligible = |r: &SweepRow| {
            r.model == model && r.metrics.is_some() && (model == MFCC_NAME || kind == SweepKind::Layers || r.k.is_some())
        };
        let position = |r: &SweepRow| match kind {
            SweepKind::Layers => r.layer.unwrap_or(-1) as i64,
            SweepKind::Pca => r.k.map_or(i64::MAX, |k| k as i64),
        };
        let best = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| eligible(r))
            .max_by(|(_, a), (_, b)| {
                a.accuracy().unwrap().total_cmp(&b.accuracy().unwrap()).then(position(b).cmp(&position(a)))
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            rows[i].is_best = true;
        }
    }
}

fn annotate(rows: &mut [SweepRow], kind: SweepKind, dataset: &str, task: Task) {
    let Some(corpus) = ReferenceCorpus::from_dataset_name(dataset) else {
        return;
    };
    for r in rows.iter_mut() {
        let model: Option<ModelId> = r.model.parse().ok();
        let reference = match (model, kind) {
            (None, _) if r.is_best => best_layer_reference(corpus, task, None),
            (Some(m), SweepKind::Layers) if r.is_best => best_layer_reference(corpus, task, Some(m)),
            (Some(m), SweepKind::Pca) if r.is_best => best_k_reference(corpus, task, m),
            (Some(m), SweepKind::Pca) if r.k.is_none() => best_layer_reference(corpus, task, Some(m)),
            _ => None,
        };
        r.reference_accuracy = reference.map(|x| x.accuracy_pct / 100.0);
    }
}

fn compare_all(rows: &[SweepRow], pairing: &PairingSpec) -> Vec<BaselineComparison> {
    let Some(base) = rows.iter().find(|r| r.model == MFCC_NAME && r.metrics.is_some()) else {
        return Vec::new();
    };
    rows.iter()
        .filter(|r| r.is_best && r.model != MFCC_NAME)
        .map(|r| {
            let (result, note) = match compare_to_baseline(&base.correct, &r.correct, pairing) {
                Ok(w) => (Some(w), None),
                Err(crate::stats::StatsError::AllZeroDifferences) => (None, Some("no difference".to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            BaselineComparison { model: r.model.clone(), layer: r.layer, k: r.k, result, note }
        })
        .collect()
}

fn finish(kind: SweepKind, manifest: &DatasetManifest, plan: &SweepPlan, prep: &Prepared, mut rows: Vec<SweepRow>) -> SweepReport {
    mark_best(&mut rows, kind);
    if plan.annotate {
        annotate(&mut rows, kind, &manifest.dataset_name, plan.task);
    }
    let comparisons = compare_all(&rows, &plan.pairing());
    SweepReport {
        kind,
        dataset: manifest.dataset_name.clone(),
        task: plan.task,
        rows,
        comparisons,
        provenance: Provenance {
            seed: plan.seed,
            train: plan.train_config(),
            pairing: plan.pairing(),
            n_train: prep.train_ids.len(),
            n_test: prep.test_ids.len(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        },
    }
}

fn run_cell(features: &dyn FeatureSource, prep: &Prepared, cell: &Cell, cfg: &TrainConfig) -> Result<Result<CellOutcome, String>, StoreError> {
    let start = Instant::now();
    let (train_x, test_x) = prep.load(features, cell.source, cell.layer)?;
    let out = train_and_score(&train_x, &test_x, prep, cfg);
    log::info!(
        "{} L{} done in {:.1}s: {}",
        cell.model_name(),
        cell.layer,
        start.elapsed().as_secs_f64(),
        out.as_ref().map_or_else(|e| format!("failed ({e})"), |o| format!("accuracy {:.4}", o.metrics.accuracy))
    );
    Ok(out)
}

/// Trains and scores one probe per (model, layer) of the plan, plus the MFCC
/// baseline when requested.
pub fn run_layer_sweep(manifest: &DatasetManifest, features: &dyn FeatureSource, plan: &SweepPlan) -> Result<SweepReport, SweepError> {
    plan.validate(manifest)?;
    if plan.systems.is_empty() && !plan.include_mfcc {
        return Err(SweepError::InvalidPlan("no systems to sweep".into()));
    }
    let prep = Prepared::new(manifest, plan.task);
    let mut cells = Vec::new();
    if plan.include_mfcc {
        cells.push(Cell { source: Source::Mfcc, layer: -1, k: None });
    }
    for s in &plan.systems {
        cells.extend(s.layers.iter().map(|&layer| Cell { source: Source::Ssl(s.model), layer, k: None }));
    }
    preflight(features, &prep, &cells.iter().map(|c| (c.source, c.layer)).collect::<Vec<_>>())?;

    let cfg = plan.train_config();
    let outcomes: Vec<Result<Result<CellOutcome, String>, StoreError>> =
        pool(plan.jobs)?.install(|| cells.par_iter().map(|c| run_cell(features, &prep, c, &cfg)).collect());
    let mut rows = Vec::with_capacity(cells.len());
    for (cell, outcome) in cells.iter().zip(outcomes) {
        rows.push(make_row(&manifest.dataset_name, plan, cell, outcome?));
    }
    Ok(finish(SweepKind::Layers, manifest, plan, &prep, rows))
}

/// Widths for one model: the requested (or default) list plus the full
/// width, largest first, without duplicates.
fn widths(model: ModelId, requested: Option<&Vec<usize>>) -> Result<Vec<usize>, SweepError> {
    let d = model.spec().dim;
    let mut ks: Vec<usize> = requested.cloned().unwrap_or_else(|| pca_sweep_dims(d));
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > d) {
        return Err(PcaError::InvalidK { k, max: d }.into());
    }
    ks.push(d);
    ks.sort_unstable_by(|a, b| b.cmp(a));
    ks.dedup();
    Ok(ks)
}

fn project_all(pca: &PcaModel, items: &[Array2<f32>]) -> Result<Vec<Array2<f32>>, PcaError> {
    items.iter().map(|x| pca.project_f32(x.view())).collect()
}

/// For each model's chosen layer: fits PCA on the training frames, then
/// trains one probe per width plus an unreduced control.
pub fn run_pca_sweep(manifest: &DatasetManifest, features: &dyn FeatureSource, plan: &SweepPlan) -> Result<SweepReport, SweepError> {
    plan.validate(manifest)?;
    let pca_plan = plan.pca.as_ref().ok_or_else(|| SweepError::InvalidPlan("plan has no PCA section".into()))?;
    if pca_plan.best_layers.is_empty() {
        return Err(SweepError::InvalidPlan("no best layers given for PCA".into()));
    }
    let prep = Prepared::new(manifest, plan.task);
    let mut needed: Vec<(Source, i16)> = pca_plan.best_layers.iter().map(|&(m, l)| (Source::Ssl(m), l)).collect();
    if plan.include_mfcc {
        needed.insert(0, (Source::Mfcc, -1));
    }
    preflight(features, &prep, &needed)?;
    let cfg = plan.train_config();
    let workers = pool(plan.jobs)?;

    let mut rows = Vec::new();
    if plan.include_mfcc {
        let cell = Cell { source: Source::Mfcc, layer: -1, k: None };
        let out = run_cell(features, &prep, &cell, &cfg)?;
        rows.push(make_row(&manifest.dataset_name, plan, &cell, out));
    }
    for &(model, layer) in &pca_plan.best_layers {
        let ks = widths(model, pca_plan.ks.as_ref())?;
        let source = Source::Ssl(model);
        let (train_x, test_x) = prep.load(features, source, layer)?;
        let views: Vec<_> = train_x.iter().map(|x| x.view()).collect();
        let start = Instant::now();
        let frames = views.iter().map(|v| v.nrows()).sum::<usize>().min(MAX_FIT_FRAMES);
        let fit_k = ks.iter().copied().find(|&k| k < frames).ok_or(PcaError::InvalidK { k: ks[ks.len() - 1], max: frames.saturating_sub(1) })?;
        if fit_k < ks[0] {
            log::warn!("{} training frames allow at most {fit_k} components; wider cells will fail", frames);
        }
        let full = fit_pca_on_matrices(&views, fit_k, plan.seed, &format!("{} L{layer} {}", model.name(), manifest.dataset_name))?;
        log::info!("PCA fit for {} L{layer} ({}) in {:.1}s", model.name(), full.fitted_on, start.elapsed().as_secs_f64());

        let mut cells = vec![Cell { source, layer, k: None }];
        cells.extend(ks.iter().map(|&k| Cell { source, layer, k: Some(k) }));
        let outcomes: Vec<Result<Result<CellOutcome, String>, PcaError>> = workers.install(|| {
            cells
                .par_iter()
                .map(|cell| {
                    let start = Instant::now();
                    let out = match cell.k {
                        None => train_and_score(&train_x, &test_x, &prep, &cfg),
                        Some(k) if k > full.k() => Err(format!("{k} components need more than {} training frames", full.k() + 1)),
                        Some(k) => {
                            let pca = full.truncated(k)?;
                            train_and_score(&project_all(&pca, &train_x)?, &project_all(&pca, &test_x)?, &prep, &cfg)
                        }
                    };
                    log::info!(
                        "{} L{layer} k={:?} done in {:.1}s: {}",
                        model.name(),
                        cell.k,
                        start.elapsed().as_secs_f64(),
                        out.as_ref().map_or_else(|e| format!("failed ({e})"), |o| format!("accuracy {:.4}", o.metrics.accuracy))
                    );
                    Ok(out)
                })
                .collect()
        });
        for (cell, outcome) in cells.iter().zip(outcomes) {
            rows.push(make_row(&manifest.dataset_name, plan, cell, outcome?));
        }
    }
    Ok(finish(SweepKind::Pca, manifest, plan, &prep, rows))
}
