// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end runs: embeddings in, bank built, test stream scored, metrics out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tsmem_core::embedding::{embed, EmbeddingConfig, EmbeddingMatrix, EmbeddingProvider, SyntheticProvider};
use tsmem_core::eval::{self, DatasetResult, FailedDataset, Report, SweepAxis, SweepPoint};
use tsmem_core::ingest::{self, generate_windows, Region, TimeSeriesRecord};
use tsmem_core::membank::{self, MemoryBank, NoveltyModel, Provenance};
use tsmem_core::scoring::{self, DistanceSpec, ScoreSeries};
use tsmem_core::trep::{self, TrepMeta};

use crate::config::{dataset_seed, ConfigError, EmbeddingSource, RunConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{dataset}: {source}")]
    Dataset {
        dataset: String,
        #[source]
        source: tsmem_core::Error,
    },
    #[error("missing embedding input(s): {}", list_paths(.0))]
    MissingEmbeddings(Vec<PathBuf>),
    #[error("missing bank artifact {0}; run `build-memory` first")]
    MissingBank(PathBuf),
    #[error("{path}: {reason}")]
    EmbeddingMismatch { path: PathBuf, reason: String },
    #[error("{path}: invalid bank sidecar: {reason}")]
    BadBankSidecar { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} datasets failed")]
    DatasetsFailed { failed: usize, total: usize },
    #[error("sweep needs at least one value")]
    EmptySweep,
}

fn list_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn in_dataset<E: Into<tsmem_core::Error>>(dataset: &str) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError::Dataset {
        dataset: dataset.to_string(),
        source: e.into(),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Exporter layout: `<dir>/<dataset>/layer<l>_patch<p>_<region>.trep`.
pub fn trep_path(dir: &Path, dataset: &str, layer: u32, reference_patch: usize, region: Region) -> PathBuf {
    dir.join(dataset)
        .join(format!("layer{layer}_patch{reference_patch}_{region}.trep"))
}

pub fn bank_path(config: &RunConfig, dataset: &str) -> PathBuf {
    config.output_dir.join("banks").join(format!("{dataset}.trep"))
}

pub fn scores_path(config: &RunConfig, dataset: &str) -> PathBuf {
    config.output_dir.join("scores").join(format!("{dataset}.csv"))
}

pub fn score_report_path(config: &RunConfig, dataset: &str) -> PathBuf {
    config.output_dir.join("scores").join(format!("{dataset}.json"))
}

pub fn embedding_config(config: &RunConfig, provider_id: String) -> EmbeddingConfig {
    EmbeddingConfig {
        layer: config.layer,
        d_model: config.d_model,
        window: config.window_spec(),
        provider_id,
    }
}

/// Embeddings for one region, either computed synthetically or loaded from
/// exported TREP files.
pub fn load_embeddings(
    record: &TimeSeriesRecord,
    config: &RunConfig,
    region: Region,
) -> Result<EmbeddingMatrix, PipelineError> {
    let name = record.name.as_str();
    let spec = config.window_spec();
    let windows = generate_windows(record, &spec, region).map_err(in_dataset(name))?;
    match config.source {
        EmbeddingSource::Synthetic => {
            let provider = SyntheticProvider::new(dataset_seed(config.seed, name));
            let ec = embedding_config(config, provider.provider_id().to_string());
            embed(&provider, &windows, &ec).map_err(in_dataset(name))
        }
        EmbeddingSource::Trep => {
            let dir = config.trep_dir.as_deref().unwrap_or(Path::new("."));
            let path = trep_path(dir, name, config.layer, spec.reference_patch, region);
            if !path.is_file() {
                return Err(PipelineError::MissingEmbeddings(vec![path]));
            }
            let (matrix, meta) = trep::read_trep(&path).map_err(in_dataset(name))?;
            let mismatch = |reason: String| PipelineError::EmbeddingMismatch {
                path: path.clone(),
                reason,
            };
            if meta.window.window_length != spec.window_length || meta.window.patch_length != spec.patch_length {
                return Err(mismatch(format!(
                    "window spec L={}, P={} differs from config L={}, P={}",
                    meta.window.window_length, meta.window.patch_length, spec.window_length, spec.patch_length
                )));
            }
            let expected: Vec<u64> = windows.iter().map(|w| w.reference_time as u64).collect();
            if matrix.reference_times() != expected.as_slice() {
                return Err(mismatch(format!(
                    "{} rows do not line up with the {} {region} windows of the series",
                    matrix.rows(),
                    expected.len()
                )));
            }
            Ok(matrix)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetStats {
    pub max_size: Option<usize>,
    pub size_before: usize,
    pub size_after: usize,
    pub reduction_ratio: f64,
    pub coverage_radius: f64,
    pub seed: u64,
}

/// Bank section of a bank artifact's sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSidecar {
    pub provenance: Vec<Provenance>,
    pub novelty: Option<NoveltyModel>,
    pub coreset: CoresetStats,
}

#[derive(Debug, Clone)]
pub struct BuiltBank {
    pub bank: MemoryBank,
    pub novelty: Option<NoveltyModel>,
    pub stats: CoresetStats,
}

/// Builds the (possibly compressed) bank and fits the novelty threshold.
pub fn build_memory(
    name: &str,
    train: &EmbeddingMatrix,
    config: &RunConfig,
    with_novelty: bool,
) -> Result<BuiltBank, PipelineError> {
    let seed = dataset_seed(config.seed, name);
    let full = membank::build_bank(train).map_err(in_dataset(name))?;
    let bank = match config.coreset {
        Some(max) => membank::kcenter_coreset(&full, max, seed).map_err(in_dataset(name))?,
        None => full.clone(),
    };
    let coverage_radius = if bank.len() == full.len() {
        0.0
    } else {
        membank::coverage_radius(&full, &bank).map_err(in_dataset(name))?
    };
    let novelty = if with_novelty {
        Some(membank::fit_novelty(&bank, train, config.novelty_q).map_err(in_dataset(name))?)
    } else {
        None
    };
    let stats = CoresetStats {
        max_size: config.coreset,
        size_before: full.len(),
        size_after: bank.len(),
        reduction_ratio: DatasetResult::reduction_ratio(full.len(), bank.len()),
        coverage_radius,
        seed,
    };
    Ok(BuiltBank {
        bank: bank.with_capacity_limit(config.capacity_limit),
        novelty,
        stats,
    })
}

pub fn write_bank(path: &Path, built: &BuiltBank, config: &RunConfig, dataset: &str) -> Result<(), PipelineError> {
    let matrix = built.bank.to_matrix().map_err(in_dataset(dataset))?;
    let mut meta = TrepMeta::from_config(&embedding_config(config, provider_label(config, dataset)), dataset);
    let sidecar = BankSidecar {
        provenance: built.bank.provenance().to_vec(),
        novelty: built.novelty,
        coreset: built.stats.clone(),
    };
    meta.bank = Some(serde_json::to_value(sidecar).expect("bank sidecar serializes"));
    trep::write_trep(path, &matrix, &meta).map_err(in_dataset(dataset))
}

pub fn read_bank(path: &Path, config: &RunConfig, dataset: &str) -> Result<BuiltBank, PipelineError> {
    if !path.is_file() {
        return Err(PipelineError::MissingBank(path.to_path_buf()));
    }
    let (matrix, meta) = trep::read_trep(path).map_err(in_dataset(dataset))?;
    let bad = |reason: String| PipelineError::BadBankSidecar {
        path: path.to_path_buf(),
        reason,
    };
    let sidecar: BankSidecar = serde_json::from_value(meta.bank.ok_or_else(|| bad("no bank section".into()))?)
        .map_err(|e| bad(e.to_string()))?;
    let (dim, data, times) = matrix.into_parts();
    let bank = MemoryBank::from_parts(dim, data, times, sidecar.provenance)
        .map_err(in_dataset(dataset))?
        .with_capacity_limit(config.capacity_limit);
    Ok(BuiltBank {
        bank,
        novelty: sidecar.novelty,
        stats: sidecar.coreset,
    })
}

fn provider_label(config: &RunConfig, dataset: &str) -> String {
    match config.source {
        EmbeddingSource::Synthetic => format!("synthetic:{}", dataset_seed(config.seed, dataset)),
        EmbeddingSource::Trep => "trep".to_string(),
    }
}

/// Per-dataset scoring summary written next to the score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub dataset: String,
    pub distance: DistanceSpec,
    pub ridge_lambda: Option<f64>,
    pub density_neighbors: Option<usize>,
    pub ttamb: bool,
    pub tau: Option<f64>,
    pub novelty_q: Option<f64>,
    pub insertion_count: usize,
    pub capacity_events: usize,
    pub bank_size_initial: usize,
    pub bank_size_final: usize,
    pub defined_scores: usize,
    pub coreset: CoresetStats,
    pub config_echo: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ScoredDataset {
    pub scores: ScoreSeries,
    pub report: ScoreReport,
}

/// Scores the test region against a built bank. Time steps in the test
/// region that no window reaches are marked undefined.
pub fn score_dataset(
    record: &TimeSeriesRecord,
    built: &BuiltBank,
    test: &EmbeddingMatrix,
    config: &RunConfig,
) -> Result<ScoredDataset, PipelineError> {
    let name = record.name.as_str();
    let dist = config.distance_spec();
    let mut bank = built.bank.clone();
    let initial = bank.len();
    let novelty = if config.ttamb { built.novelty.as_ref() } else { None };
    if config.ttamb && novelty.is_none() {
        return Err(PipelineError::BadBankSidecar {
            path: bank_path(config, name),
            reason: "ttamb is on but the bank carries no novelty threshold".into(),
        });
    }
    let outcome = scoring::score_stream(&mut bank, novelty, test, &dist).map_err(in_dataset(name))?;
    let mut scores = outcome.scores.clone();
    scores.mark_undefined(record.train_end as u64..record.len() as u64);
    let report = ScoreReport {
        dataset: name.to_string(),
        distance: dist,
        ridge_lambda: matches!(dist, DistanceSpec::Mahalanobis { .. }).then_some(config.ridge),
        density_neighbors: matches!(dist, DistanceSpec::Density { .. }).then_some(config.density_neighbors),
        ttamb: config.ttamb,
        tau: novelty.map(|n| n.threshold),
        novelty_q: novelty.map(|n| n.percentile),
        insertion_count: outcome.insertion_count(),
        capacity_events: bank.capacity_events(),
        bank_size_initial: initial,
        bank_size_final: bank.len(),
        defined_scores: scores.defined_count(),
        coreset: built.stats.clone(),
        config_echo: config.echo(),
    };
    Ok(ScoredDataset { scores, report })
}

#[derive(Debug, Clone)]
pub struct DatasetRun {
    pub result: DatasetResult,
    pub scored: ScoredDataset,
}

/// Full in-memory pipeline for one series.
pub fn run_record(record: &TimeSeriesRecord, config: &RunConfig) -> Result<DatasetRun, PipelineError> {
    let name = record.name.as_str();
    let train = load_embeddings(record, config, Region::Train)?;
    let test = load_embeddings(record, config, Region::Test)?;
    let built = build_memory(name, &train, config, config.ttamb)?;
    let scored = score_dataset(record, &built, &test, config)?;
    let (top, alpha_hits) = eval::evaluate(&scored.scores, record, &config.eval_config()).map_err(in_dataset(name))?;
    let result = DatasetResult {
        name: name.to_string(),
        top1_hit: top.hit,
        argmax_time: top.argmax_time,
        alpha_hits,
        bank_size_before: built.stats.size_before,
        bank_size_after: built.stats.size_after,
        reduction_ratio: built.stats.reduction_ratio,
        insertion_count: scored.report.insertion_count,
    };
    Ok(DatasetRun { result, scored })
}

fn dataset_name(path: &Path) -> String {
    path.file_name()
        .and_then(|f| f.to_str())
        .and_then(|f| ingest::parse_ucr_filename(f).ok())
        .map(|(name, ..)| name)
        .unwrap_or_else(|| path.display().to_string())
}

fn load_record(path: &Path) -> Result<TimeSeriesRecord, PipelineError> {
    ingest::parse_ucr_file(path).map_err(|e| PipelineError::Dataset {
        dataset: dataset_name(path),
        source: e.into(),
    })
}

fn pool(config: &RunConfig) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("thread pool builds")
}

type PerDataset<T> = Vec<(PathBuf, Result<T, PipelineError>)>;

/// Runs `job` over every dataset in parallel; results come back in path order.
fn for_each_dataset<T: Send>(
    config: &RunConfig,
    job: impl Fn(&Path) -> Result<T, PipelineError> + Sync,
) -> Result<PerDataset<T>, PipelineError> {
    config.validate()?;
    let paths = config.resolve_datasets()?;
    Ok(pool(config).install(|| {
        paths
            .into_par_iter()
            .map(|p| {
                let r = job(&p);
                (p, r)
            })
            .collect()
    }))
}

/// Outcome of a batch command: what succeeded and what did not.
#[derive(Debug)]
pub struct BatchOutcome<T> {
    pub done: Vec<T>,
    pub failed: Vec<FailedDataset>,
}

impl<T> BatchOutcome<T> {
    pub fn into_result(self) -> Result<Vec<T>, PipelineError> {
        if self.failed.is_empty() {
            Ok(self.done)
        } else {
            Err(PipelineError::DatasetsFailed {
                failed: self.failed.len(),
                total: self.failed.len() + self.done.len(),
            })
        }
    }
}

fn split<T>(results: PerDataset<T>) -> BatchOutcome<T> {
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for (path, r) in results {
        match r {
            Ok(v) => done.push(v),
            Err(e) => failed.push(FailedDataset {
                name: dataset_name(&path),
                error: e.to_string(),
            }),
        }
    }
    BatchOutcome { done, failed }
}

/// `build-memory`: writes `<out>/banks/<dataset>.trep` plus sidecar.
pub fn cmd_build_memory(config: &RunConfig) -> Result<BatchOutcome<(String, CoresetStats)>, PipelineError> {
    let results = for_each_dataset(config, |path| {
        let record = load_record(path)?;
        let train = load_embeddings(&record, config, Region::Train)?;
        let built = build_memory(&record.name, &train, config, true)?;
        write_bank(&bank_path(config, &record.name), &built, config, &record.name)?;
        Ok((record.name.clone(), built.stats))
    })?;
    Ok(split(results))
}

/// `score`: reads each bank artifact and writes the score CSV and report.
pub fn cmd_score(config: &RunConfig) -> Result<BatchOutcome<ScoreReport>, PipelineError> {
    let results = for_each_dataset(config, |path| {
        let record = load_record(path)?;
        let built = read_bank(&bank_path(config, &record.name), config, &record.name)?;
        let test = load_embeddings(&record, config, Region::Test)?;
        let scored = score_dataset(&record, &built, &test, config)?;
        write_scores(config, &scored)?;
        Ok(scored.report)
    })?;
    Ok(split(results))
}

fn write_scores(config: &RunConfig, scored: &ScoredDataset) -> Result<(), PipelineError> {
    let name = &scored.report.dataset;
    write_file(&scores_path(config, name), scored.scores.to_csv())?;
    let json = serde_json::to_string_pretty(&scored.report).expect("score report serializes") + "\n";
    write_file(&score_report_path(config, name), json)
}

/// Runs the full pipeline over every dataset and aggregates. Per-dataset
/// failures land in `report.failed`.
pub fn evaluate_all(config: &RunConfig) -> Result<(Report, Vec<DatasetRun>), PipelineError> {
    let results = for_each_dataset(config, |path| run_record(&load_record(path)?, config))?;
    let BatchOutcome { done, failed } = split(results);
    let per_dataset: Vec<DatasetResult> = done.iter().map(|r| r.result.clone()).collect();
    let mut report = match eval::aggregate(&per_dataset) {
        Ok(r) => r,
        Err(_) => Report {
            top1_accuracy_pct: 0.0,
            datasets: 0,
            hits: 0,
            per_dataset: Vec::new(),
            alpha_counts: BTreeMap::new(),
            mean_reduction_ratio: 0.0,
            insertion_count: 0,
            failed: Vec::new(),
            config_echo: BTreeMap::new(),
        },
    };
    report.failed = failed;
    report.config_echo = config.echo();
    Ok((report, done))
}

/// `eval`: writes per-dataset scores plus `report.json` and `report.txt`.
/// Returns the report even when some datasets failed.
pub fn cmd_eval(config: &RunConfig) -> Result<Report, PipelineError> {
    let (report, runs) = evaluate_all(config)?;
    for run in &runs {
        write_scores(config, &run.scored)?;
    }
    write_file(&config.output_dir.join("report.json"), report.to_json())?;
    write_file(&config.output_dir.join("report.txt"), report.to_table())?;
    Ok(report)
}

/// Embedding files a sweep over `axis` needs that are not present.
pub fn missing_sweep_inputs(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<PathBuf>, PipelineError> {
    if config.source != EmbeddingSource::Trep {
        return Ok(Vec::new());
    }
    let dir = config.trep_dir.clone().unwrap_or_default();
    let records: Vec<String> = config.resolve_datasets()?.iter().map(|p| dataset_name(p)).collect();
    let mut missing = Vec::new();
    for value in values {
        let mut c = config.clone();
        if matches!(axis, SweepAxis::Layer | SweepAxis::ReferencePatch) {
            c.set(axis.config_key(), value)?;
        }
        let patch = c.window_spec().reference_patch;
        for name in &records {
            for region in [Region::Train, Region::Test] {
                let p = trep_path(&dir, name, c.layer, patch, region);
                if !p.is_file() {
                    missing.push(p);
                }
            }
        }
    }
    Ok(missing)
}

/// `sweep`: one full evaluation per value, each under
/// `<out>/sweep_<axis>/<value>/`, plus `sweep_<axis>.{csv,json}`.
pub fn cmd_sweep(config: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepPoint>, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::EmptySweep);
    }
    config.validate()?;
    let missing = missing_sweep_inputs(config, axis, values)?;
    if !missing.is_empty() {
        return Err(PipelineError::MissingEmbeddings(missing));
    }
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let mut c = config.clone();
        c.set(axis.config_key(), value)?;
        c.output_dir = config.output_dir.join(format!("sweep_{axis}")).join(value);
        let report = cmd_eval(&c)?;
        points.push(SweepPoint {
            value: value.clone(),
            report,
        });
    }
    let base = config.output_dir.join(format!("sweep_{axis}"));
    write_file(&base.with_extension("csv"), eval::sweep_csv(&points))?;
    let json = serde_json::to_string_pretty(&points).expect("sweep serializes") + "\n";
    write_file(&base.with_extension("json"), json)?;
    Ok(points)
}
