//! Model-selection grid over topic counts and alpha-optimization intervals,
//! each cell scored by cross-validated play classification.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalml::{cross_validate, play_topic_features, ClassifierKind, ClassifierSpec, CvOptions, CvResult};
use crate::lda::{train, ModelParams, Vocabulary};
use crate::lingpipe::Segment;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("no classifiers configured")]
    NoClassifiers,
    #[error("every grid cell failed")]
    AllCellsFailed,
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub topic_counts: Vec<usize>,
    /// `None` trains with a fixed symmetric prior.
    pub optimize_intervals: Vec<Option<usize>>,
    pub iterations: usize,
    pub base_seed: u64,
    pub classifiers: Vec<ClassifierSpec>,
    /// Independent trainings per cell (seed offset by repeat index).
    pub repeats: usize,
    pub cv: CvOptions,
    /// Template for everything not varied by the grid.
    pub model: ModelParams,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            topic_counts: vec![50, 60, 70, 80, 90, 100],
            optimize_intervals: vec![
                Some(50),
                Some(100),
                Some(300),
                Some(500),
                Some(1000),
                Some(2000),
                Some(3000),
                None,
            ],
            iterations: 6000,
            base_seed: 1,
            classifiers: ClassifierKind::ALL.iter().map(|k| k.default_spec()).collect(),
            repeats: 1,
            cv: CvOptions::default(),
            model: ModelParams::default(),
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> Vec<(usize, Option<usize>)> {
        self.topic_counts
            .iter()
            .flat_map(|&k| self.optimize_intervals.iter().map(move |&i| (k, i)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.topic_counts.is_empty() || self.optimize_intervals.is_empty() {
            return Err(SweepError::EmptyGrid);
        }
        if self.classifiers.is_empty() {
            return Err(SweepError::NoClassifiers);
        }
        Ok(())
    }

    pub fn cell_params(&self, k: usize, interval: Option<usize>, repeat: usize) -> ModelParams {
        ModelParams {
            num_topics: k,
            iterations: self.iterations,
            optimize_interval: interval,
            optimize_burn_in: interval.and(self.model.optimize_burn_in),
            seed: cell_seed(self.base_seed, k, interval).wrapping_add(repeat as u64),
            ..self.model.clone()
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn interval_code(interval: Option<usize>) -> u64 {
    interval.map_or(u64::MAX, |i| i as u64)
}

/// `base_seed XOR fnv1a(K, interval)`, with `None` encoded as `u64::MAX`.
pub fn cell_seed(base_seed: u64, k: usize, interval: Option<usize>) -> u64 {
    let mut bytes = Vec::with_capacity(16);
    bytes.extend_from_slice(&(k as u64).to_le_bytes());
    bytes.extend_from_slice(&interval_code(interval).to_le_bytes());
    base_seed ^ fnv1a(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScore {
    pub spec: ClassifierSpec,
    /// One cross-validation per repeat.
    pub runs: Vec<CvResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

impl ClassifierScore {
    fn from_runs(spec: ClassifierSpec, runs: Vec<CvResult>) -> Self {
        let folds: Vec<f64> = runs.iter().flat_map(|r| r.per_fold_accuracy.iter().copied()).collect();
        let n = runs.len() as f64;
        let mean_accuracy = runs.iter().map(|r| r.mean_accuracy).sum::<f64>() / n;
        let std_accuracy = if runs.len() == 1 {
            runs[0].std_accuracy
        } else {
            let m = folds.iter().sum::<f64>() / folds.len() as f64;
            (folds.iter().map(|a| (a - m).powi(2)).sum::<f64>() / folds.len() as f64).sqrt()
        };
        ClassifierScore {
            spec,
            runs,
            mean_accuracy,
            std_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub num_topics: usize,
    pub optimize_interval: Option<usize>,
    pub seed: u64,
    pub scores: Vec<ClassifierScore>,
    /// Set when training or evaluation failed; such cells have no scores.
    pub error: Option<String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub num_topics: usize,
    pub optimize_interval: Option<usize>,
    pub classifier: ClassifierKind,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// In grid order: topic counts outer, intervals inner.
    pub cells: Vec<CellResult>,
    pub best: Option<BestCell>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Identifies the training data; part of every checkpoint key.
    pub corpus_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    key: String,
    cell: CellResult,
}

fn checkpoint_key(grid: &GridSpec, digest: &str, k: usize, interval: Option<usize>) -> String {
    let spec = serde_json::json!({
        "corpus": digest,
        "k": k,
        "interval": interval,
        "iterations": grid.iterations,
        "seed": cell_seed(grid.base_seed, k, interval),
        "repeats": grid.repeats,
        "classifiers": grid.classifiers,
        "cv": grid.cv,
        "model": grid.model,
    });
    format!("{:016x}", fnv1a(spec.to_string().as_bytes()))
}

fn checkpoint_path(dir: &Path, k: usize, interval: Option<usize>) -> PathBuf {
    let i = interval.map_or("none".to_string(), |i| i.to_string());
    dir.join(format!("cell-k{k}-i{i}.json"))
}

fn load_checkpoint(path: &Path, key: &str) -> Option<CellResult> {
    let text = fs::read_to_string(path).ok()?;
    let c: Checkpoint = serde_json::from_str(&text).ok()?;
    (c.key == key && !c.cell.failed()).then_some(c.cell)
}

fn store_checkpoint(path: &Path, key: &str, cell: &CellResult) -> Result<(), SweepError> {
    let err = |source| SweepError::Checkpoint {
        path: path.to_path_buf(),
        source,
    };
    let json = serde_json::to_string_pretty(&Checkpoint {
        key: key.to_string(),
        cell: cell.clone(),
    })
    .map_err(|e| err(e.into()))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, json).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

/// Trains and scores one grid cell.
pub fn run_cell(
    segments: &[Segment],
    vocab: &Vocabulary,
    grid: &GridSpec,
    plays: &[(String, String)],
    k: usize,
    interval: Option<usize>,
) -> CellResult {
    let seed = cell_seed(grid.base_seed, k, interval);
    let segment_play: HashMap<String, String> = segments
        .iter()
        .map(|s| (s.segment_id.clone(), s.play_id.clone()))
        .collect();
    let attempt = || -> Result<Vec<ClassifierScore>, String> {
        let mut runs: Vec<Vec<CvResult>> = vec![Vec::new(); grid.classifiers.len()];
        for repeat in 0..grid.repeats.max(1) {
            let params = grid.cell_params(k, interval, repeat);
            let model = train(segments, vocab, &params).map_err(|e| e.to_string())?;
            let features = play_topic_features::<f64>(&model, &segment_play, plays).map_err(|e| e.to_string())?;
            for (c, spec) in grid.classifiers.iter().enumerate() {
                runs[c].push(cross_validate(&features, spec, &grid.cv).map_err(|e| e.to_string())?);
            }
        }
        Ok(grid
            .classifiers
            .iter()
            .cloned()
            .zip(runs)
            .map(|(spec, r)| ClassifierScore::from_runs(spec, r))
            .collect())
    };
    match attempt() {
        Ok(scores) => CellResult {
            num_topics: k,
            optimize_interval: interval,
            seed,
            scores,
            error: None,
        },
        Err(e) => {
            log::warn!("cell K={k} interval={interval:?} failed: {e}");
            CellResult {
                num_topics: k,
                optimize_interval: interval,
                seed,
                scores: Vec::new(),
                error: Some(e),
            }
        }
    }
}

/// Runs every cell (in parallel, `opts.jobs` workers), reusing matching
/// checkpoints. Cell failures are recorded, never fatal.
pub fn run_sweep(
    segments: &[Segment],
    vocab: &Vocabulary,
    grid: &GridSpec,
    plays: &[(String, String)],
    opts: &SweepOptions,
) -> Result<SweepResult, SweepError> {
    grid.validate()?;
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|source| SweepError::Checkpoint {
            path: dir.clone(),
            source,
        })?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let cells = pool.install(|| {
        grid.cells()
            .into_par_iter()
            .map(|(k, interval)| {
                let key = checkpoint_key(grid, &opts.corpus_digest, k, interval);
                let path = opts.checkpoint_dir.as_deref().map(|d| checkpoint_path(d, k, interval));
                if let Some(cell) = path.as_deref().and_then(|p| load_checkpoint(p, &key)) {
                    log::info!("cell K={k} interval={interval:?}: reusing checkpoint");
                    return Ok(cell);
                }
                log::info!("cell K={k} interval={interval:?}: training");
                let cell = run_cell(segments, vocab, grid, plays, k, interval);
                if let (Some(p), false) = (&path, cell.failed()) {
                    store_checkpoint(p, &key, &cell)?;
                }
                Ok(cell)
            })
            .collect::<Result<Vec<CellResult>, SweepError>>()
    })?;
    let mut result = SweepResult { cells, best: None };
    result.best = select_best(&result).ok();
    Ok(result)
}

fn interval_order(a: Option<usize>, b: Option<usize>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Highest mean accuracy; ties go to smaller K, then smaller interval
/// (no optimization last), then classifier order.
pub fn select_best(result: &SweepResult) -> Result<BestCell, SweepError> {
    let mut best: Option<BestCell> = None;
    for cell in result.cells.iter().filter(|c| !c.failed()) {
        for s in &cell.scores {
            let cand = BestCell {
                num_topics: cell.num_topics,
                optimize_interval: cell.optimize_interval,
                classifier: s.spec.kind(),
                mean_accuracy: s.mean_accuracy,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.mean_accuracy
                        .partial_cmp(&b.mean_accuracy)
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| b.num_topics.cmp(&cand.num_topics))
                        .then_with(|| interval_order(b.optimize_interval, cand.optimize_interval))
                        .then_with(|| b.classifier.cmp(&cand.classifier))
                        == Ordering::Greater
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.ok_or(SweepError::AllCellsFailed)
}

pub fn format_interval(interval: Option<usize>) -> String {
    interval.map_or("none".to_string(), |i| i.to_string())
}

/// TSV `K interval classifier mean_acc std_acc`; failed cells appear as
/// `#`-prefixed lines.
pub fn write_sweep_report<W: Write>(mut w: W, result: &SweepResult) -> std::io::Result<()> {
    writeln!(w, "K\tinterval\tclassifier\tmean_acc\tstd_acc")?;
    for cell in &result.cells {
        let i = format_interval(cell.optimize_interval);
        if let Some(e) = &cell.error {
            writeln!(
                w,
                "# failed\t{}\t{i}\t{}",
                cell.num_topics,
                e.replace(['\t', '\n'], " ")
            )?;
            continue;
        }
        for s in &cell.scores {
            writeln!(
                w,
                "{}\t{i}\t{}\t{:.6}\t{:.6}",
                cell.num_topics,
                s.spec.kind(),
                s.mean_accuracy,
                s.std_accuracy
            )?;
        }
    }
    Ok(())
}
