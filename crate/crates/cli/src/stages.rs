//! Pipeline stages. Each stage reads its predecessors' files from the output
//! directory and writes its own subdirectory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tmwr_core::analytics::{
    genre_topic_table, mann_whitney, section_distribution, section_values, segment_info, top_distinctive,
    topic_cosine_similarity, write_boxplot_data, write_genre_means, write_heatmap, GenreTopicTable,
    SectionDistribution,
};
use tmwr_core::cluster::{
    cluster_genre_composition, cophenetic_correlation, cut_tree, pc_genre_correlation, pca, ward_linkage,
    write_linkage, write_loadings, write_pca_scores, write_ratios, MergeTree, PcaResult,
};
use tmwr_core::corpus::{
    apply_metadata, load_corpus_dir, load_metadata_table, read_blocks, read_manifest, write_blocks, write_manifest,
    FilterCriteria, ManifestEntry, PlayMetadata,
};
use tmwr_core::evalml::{
    cross_validate, mfw_zscore_features, play_topic_features, read_features, write_cv_report, write_features,
    ClassifierSpec, CvResult, FeatureMatrix, PlayTokens,
};
use tmwr_core::lda::{build_vocab, load_model, save_model, train, write_doc_topics, write_topic_report, TopicModel};
use tmwr_core::lingpipe::{
    lemmatize, read_segments, read_tagged_vertical, read_word_list, segment_play, tokenize, write_segments,
    ContentFilter, LemmaLexicon, Segment,
};
use tmwr_core::report::{
    boxplots, dendrogram, heatmap, leaf_label, scatter, sweep_chart, wordcloud, wordcloud_sizes, Figure, Palette,
};
use tmwr_core::sweep::{run_sweep, select_best, write_sweep_report, BestCell, SweepError, SweepOptions, SweepResult};

use crate::config::{PipelineConfig, ResolvedPaths};
use crate::error::{data_err, io_err, CliError};
use crate::manifest::{sha256_file, sha256_hex, write_atomic, Manifest, StageRecord};

pub const PLAYS: &str = "ingest/plays.tsv";
pub const BLOCKS: &str = "ingest/blocks.tsv";
pub const FAILURES: &str = "ingest/failures.tsv";
pub const EXCLUDED: &str = "ingest/excluded.tsv";
pub const SEGMENTS: &str = "prepare/segments.tsv";
pub const TOKENS: &str = "prepare/tokens.tsv";
pub const PREP_SUMMARY: &str = "prepare/summary.tsv";
pub const SWEEP_REPORT: &str = "sweep/sweep.tsv";
pub const SWEEP_RESULT: &str = "sweep/result.json";
pub const SWEEP_BEST: &str = "sweep/best.json";
pub const SWEEP_CHECKPOINTS: &str = "sweep/checkpoints";
pub const MODEL: &str = "model/model.txt";
pub const TOPICS: &str = "model/topics.tsv";
pub const DOC_TOPICS: &str = "model/doc_topics.tsv";
pub const FEATURES: &str = "evaluate/features.tsv";
pub const CV: &str = "evaluate/cv.tsv";
pub const MFW_CV: &str = "evaluate/mfw_cv.tsv";
pub const CONFUSION: &str = "evaluate/confusion.tsv";
pub const EVAL_SUMMARY: &str = "evaluate/summary.tsv";
pub const GENRE_MEANS: &str = "analyze/genre_means.tsv";
pub const RANKING: &str = "analyze/distinctive.tsv";
pub const HEATMAP: &str = "analyze/heatmap.tsv";
pub const BOXPLOTS: &str = "analyze/boxplots.tsv";
pub const SECTION_TESTS: &str = "analyze/section_tests.tsv";
pub const SIMILARITY: &str = "analyze/topic_similarity.tsv";
pub const ANALYSIS: &str = "analyze/analysis.json";
pub const PCA_SCORES: &str = "cluster/pca_scores.tsv";
pub const LOADINGS: &str = "cluster/pca_loadings.tsv";
pub const RATIOS: &str = "cluster/pca_ratios.tsv";
pub const CORRELATION: &str = "cluster/pc_genre_correlation.tsv";
pub const LINKAGE: &str = "cluster/linkage.tsv";
pub const CLUSTERS: &str = "cluster/clusters.tsv";
pub const COMPOSITION: &str = "cluster/composition.tsv";
pub const CLUSTER_SUMMARY: &str = "cluster/summary.tsv";
pub const CLUSTER_STATE: &str = "cluster/cluster.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Prepare,
    Sweep,
    Model,
    Evaluate,
    Analyze,
    Cluster,
    Render,
}

impl Stage {
    /// Pipeline order.
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Prepare,
        Stage::Sweep,
        Stage::Model,
        Stage::Evaluate,
        Stage::Analyze,
        Stage::Cluster,
        Stage::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Prepare => "prepare",
            Stage::Sweep => "sweep",
            Stage::Model => "model",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
            Stage::Cluster => "cluster",
            Stage::Render => "render",
        }
    }

    /// Stage that writes `rel`, judged by its directory.
    fn producer_of(rel: &str) -> &'static str {
        let dir = rel.split('/').next().unwrap_or(rel);
        Stage::ALL
            .into_iter()
            .find(|s| s.name() == dir)
            .map_or("pipeline", Stage::name)
    }
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub paths: ResolvedPaths,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Context {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Opens an upstream output, failing with the producing stage's name.
    fn open(&self, rel: &'static str) -> Result<BufReader<File>, CliError> {
        let path = self.path(rel);
        File::open(&path)
            .map(BufReader::new)
            .map_err(|_| CliError::MissingInput {
                path,
                stage: Stage::producer_of(rel),
            })
    }
}

struct Input {
    label: String,
    path: PathBuf,
    /// Set for files written by an earlier stage.
    producer: Option<&'static str>,
}

fn internal(ctx: &Context, label: &'static str) -> Input {
    Input {
        label: label.to_string(),
        path: ctx.path(label),
        producer: Some(Stage::producer_of(label)),
    }
}

fn external(label: &str, path: &Path) -> Input {
    Input {
        label: label.to_string(),
        path: path.to_path_buf(),
        producer: None,
    }
}

fn dir_inputs(prefix: &str, dir: &Path, ext: &str) -> Result<Vec<Input>, CliError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(data_err(dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_lowercase().ends_with(ext))
        .collect();
    names.sort();
    Ok(names
        .into_iter()
        .map(|n| external(&format!("{prefix}/{n}"), &dir.join(&n)))
        .collect())
}

fn stage_inputs(stage: Stage, ctx: &Context) -> Result<Vec<Input>, CliError> {
    let p = &ctx.paths;
    let mut inputs = Vec::new();
    match stage {
        Stage::Ingest => {
            inputs.extend(dir_inputs("corpus", &p.corpus_dir, ".xml")?);
            if let Some(m) = &p.metadata {
                inputs.push(external("metadata", m));
            }
        }
        Stage::Prepare => {
            inputs.push(internal(ctx, PLAYS));
            inputs.push(internal(ctx, BLOCKS));
            for (label, path) in [("lexicon", &p.lexicon), ("stoplist", &p.stoplist), ("names", &p.names)] {
                if let Some(path) = path {
                    inputs.push(external(label, path));
                }
            }
            if let Some(dir) = &p.tagged_dir {
                inputs.extend(dir_inputs("tagged", dir, ".tsv")?);
            }
        }
        Stage::Sweep => {
            inputs.push(internal(ctx, PLAYS));
            inputs.push(internal(ctx, SEGMENTS));
        }
        Stage::Model => {
            inputs.push(internal(ctx, SEGMENTS));
            if ctx.cfg.model.from_sweep {
                inputs.push(internal(ctx, SWEEP_BEST));
            }
        }
        Stage::Evaluate => {
            inputs.push(internal(ctx, PLAYS));
            inputs.push(internal(ctx, SEGMENTS));
            inputs.push(internal(ctx, MODEL));
            if ctx.cfg.evaluate.mfw {
                inputs.push(internal(ctx, TOKENS));
            }
        }
        Stage::Analyze => {
            inputs.push(internal(ctx, PLAYS));
            inputs.push(internal(ctx, SEGMENTS));
            inputs.push(internal(ctx, MODEL));
        }
        Stage::Cluster => inputs.push(internal(ctx, FEATURES)),
        Stage::Render => {
            inputs.push(internal(ctx, MODEL));
            inputs.push(internal(ctx, ANALYSIS));
            inputs.push(internal(ctx, CLUSTER_STATE));
            if ctx.cfg.sweep.enabled {
                inputs.push(internal(ctx, SWEEP_RESULT));
            }
        }
    }
    Ok(inputs)
}

/// The configuration a stage's outputs depend on.
fn stage_config(stage: Stage, cfg: &PipelineConfig) -> serde_json::Value {
    let body = match stage {
        Stage::Ingest => json!({
            "filter": cfg.filter,
            "genre_labels": cfg.genre_labels,
            "lowercase": cfg.prepare.lowercase,
            "include_stage_directions": cfg.prepare.include_stage_directions,
        }),
        Stage::Prepare => json!({ "prepare": cfg.prepare }),
        Stage::Sweep => json!({
            "sweep": cfg.sweep,
            "model": cfg.model,
            "classifiers": cfg.classifiers,
            "folds": cfg.evaluate.folds,
            "stratified": cfg.evaluate.stratified,
            "seed": cfg.run.seed,
        }),
        Stage::Model => json!({ "model": cfg.model, "seed": cfg.run.seed }),
        Stage::Evaluate => json!({
            "classifiers": cfg.classifiers,
            "evaluate": cfg.evaluate,
            "seed": cfg.run.seed,
        }),
        Stage::Analyze => json!({ "analyze": cfg.analyze, "genres": cfg.filter.genres }),
        Stage::Cluster => json!({ "cluster": cfg.cluster, "genres": cfg.filter.genres }),
        Stage::Render => json!({
            "analyze": cfg.analyze,
            "cluster": cfg.cluster,
            "genres": cfg.filter.genres,
            "sweep": cfg.sweep.enabled,
        }),
    };
    json!({ "stage": stage.name(), "version": env!("CARGO_PKG_VERSION"), "config": body })
}

/// Collects a stage's files in memory order and writes each atomically.
struct Outputs<'a> {
    out: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn write(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        let path = self.out.join(rel);
        f(&mut buf).map_err(io_err(&path))?;
        write_atomic(&path, &buf)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        self.write(rel, |w| writeln!(w, "{text}"))
    }

    fn svg(
        &mut self,
        base: &str,
        fig: &Figure,
        tsv: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let svg = fig.to_svg();
        self.write(&format!("render/{base}.svg"), |w| w.write_all(svg.as_bytes()))?;
        self.write(&format!("render/{base}.tsv"), tsv)
    }
}

/// Runs one stage and records it in the manifest. With `skip_current`, a
/// stage whose config, inputs and outputs all match the manifest is left
/// alone. Returns whether the stage ran.
pub fn run_stage(ctx: &Context, stage: Stage, manifest: &mut Manifest, skip_current: bool) -> Result<bool, CliError> {
    let inputs = stage_inputs(stage, ctx)?;
    let mut digests = BTreeMap::new();
    for input in &inputs {
        let digest = sha256_file(&input.path).map_err(|e| match input.producer {
            Some(stage) => CliError::MissingInput {
                path: input.path.clone(),
                stage,
            },
            None => CliError::Data(format!("{}: {e}", input.path.display())),
        })?;
        digests.insert(input.label.clone(), digest);
    }
    let config = stage_config(stage, &ctx.cfg);
    let config_digest = sha256_hex(config.to_string().as_bytes());
    if skip_current && manifest.is_current(stage.name(), &config_digest, &digests, &ctx.out) {
        log::info!("{}: up to date, skipped", stage.name());
        return Ok(false);
    }
    log::info!("{}: running", stage.name());
    clear_stage_dir(ctx, stage)?;
    let mut outputs = Outputs {
        out: &ctx.out,
        files: Vec::new(),
    };
    match stage {
        Stage::Ingest => ingest(ctx, &mut outputs)?,
        Stage::Prepare => prepare(ctx, &mut outputs)?,
        Stage::Sweep => sweep(ctx, &mut outputs)?,
        Stage::Model => model(ctx, &mut outputs)?,
        Stage::Evaluate => evaluate(ctx, &mut outputs)?,
        Stage::Analyze => analyze(ctx, &mut outputs)?,
        Stage::Cluster => cluster(ctx, &mut outputs)?,
        Stage::Render => render(ctx, &mut outputs)?,
    }
    let mut record = StageRecord {
        config_digest,
        inputs: digests,
        outputs: BTreeMap::new(),
    };
    for rel in outputs.files {
        let path = ctx.path(&rel);
        let digest = sha256_file(&path).map_err(io_err(&path))?;
        record.outputs.insert(rel, digest);
    }
    manifest.stages.insert(stage.name().to_string(), record);
    manifest.save(&ctx.out)?;
    Ok(true)
}

/// Removes a stage's previous outputs; sweep checkpoints survive.
fn clear_stage_dir(ctx: &Context, stage: Stage) -> Result<(), CliError> {
    let dir = ctx.path(stage.name());
    let Ok(entries) = std::fs::read_dir(&dir) else {
        return Ok(());
    };
    let keep = ctx.path(SWEEP_CHECKPOINTS);
    for entry in entries.flatten() {
        let path = entry.path();
        if path == keep {
            continue;
        }
        let result = if path.is_dir() {
            std::fs::remove_dir_all(&path)
        } else {
            std::fs::remove_file(&path)
        };
        result.map_err(io_err(&path))?;
    }
    Ok(())
}

/// Runs every stage in order, skipping those that are up to date.
pub fn run_pipeline(ctx: &Context) -> Result<(usize, usize), CliError> {
    let mut manifest = Manifest::load(&ctx.out);
    let (mut ran, mut skipped) = (0, 0);
    for stage in Stage::ALL {
        if stage == Stage::Sweep && !ctx.cfg.sweep.enabled {
            continue;
        }
        if run_stage(ctx, stage, &mut manifest, true)? {
            ran += 1;
        } else {
            skipped += 1;
        }
    }
    Ok((ran, skipped))
}

// ---------------------------------------------------------------------------
// ingest

fn exclusion_reason(meta: &PlayMetadata, c: &FilterCriteria) -> String {
    let mut reasons = Vec::new();
    if !meta.year.is_some_and(|y| c.year_min <= y && y <= c.year_max) {
        reasons.push("year");
    }
    if !(c.act_min <= meta.act_count && meta.act_count <= c.act_max) {
        reasons.push("acts");
    }
    if !c.genres.contains(&meta.genre) {
        reasons.push("genre");
    }
    reasons.join(",")
}

fn ingest(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let table = ctx.cfg.genre_table();
    let load = load_corpus_dir(&ctx.paths.corpus_dir, &table).map_err(data_err("corpus"))?;
    for (path, e) in &load.failures {
        log::warn!("skipping {}: {e}", path.display());
    }
    let (mut metas, texts): (Vec<PlayMetadata>, Vec<_>) = load.plays.into_iter().unzip();
    if let Some(path) = &ctx.paths.metadata {
        let bytes = std::fs::read(path).map_err(data_err(path.display()))?;
        let rows = load_metadata_table(&bytes, &table).map_err(data_err(path.display()))?;
        for id in apply_metadata(&mut metas, &rows) {
            log::warn!("metadata row {id} matches no play");
        }
    }
    let criteria = ctx.cfg.filter_criteria();
    let prep = &ctx.cfg.prepare;
    let mut accepted: Vec<(ManifestEntry, _)> = Vec::new();
    let mut excluded = Vec::new();
    for (meta, text) in metas.into_iter().zip(texts) {
        if criteria.accepts(&meta) {
            let token_count = tokenize(&text.joined_text(prep.include_stage_directions), prep.lowercase).len();
            accepted.push((ManifestEntry { meta, token_count }, text));
        } else {
            excluded.push(meta);
        }
    }
    accepted.sort_by(|a, b| a.0.meta.play_id.cmp(&b.0.meta.play_id));
    excluded.sort_by(|a, b| a.play_id.cmp(&b.play_id));
    log::info!(
        "ingest: {} plays kept, {} excluded, {} failed",
        accepted.len(),
        excluded.len(),
        load.failures.len()
    );
    if accepted.is_empty() {
        return Err(CliError::Data(format!(
            "no play in {} passes the corpus filter",
            ctx.paths.corpus_dir.display()
        )));
    }
    let (entries, texts): (Vec<ManifestEntry>, Vec<_>) = accepted.into_iter().unzip();
    out.write(PLAYS, |w| write_manifest(w, &entries))?;
    out.write(BLOCKS, |w| write_blocks(w, &texts))?;
    out.write(EXCLUDED, |w| {
        writeln!(w, "play_id\tyear\tact_count\tgenre\treason")?;
        for m in &excluded {
            let year = m.year.map(|y| y.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{}\t{year}\t{}\t{}\t{}",
                m.play_id,
                m.act_count,
                m.genre,
                exclusion_reason(m, &criteria)
            )?;
        }
        Ok(())
    })?;
    out.write(FAILURES, |w| {
        writeln!(w, "file\terror")?;
        for (path, e) in &load.failures {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let msg = e.to_string().replace(['\t', '\n'], " ");
            writeln!(w, "{name}\t{msg}")?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// prepare

fn read_entries(ctx: &Context) -> Result<Vec<ManifestEntry>, CliError> {
    read_manifest(ctx.open(PLAYS)?).map_err(data_err(PLAYS))
}

fn read_segments_file(ctx: &Context) -> Result<Vec<Segment>, CliError> {
    read_segments(ctx.open(SEGMENTS)?).map_err(data_err(SEGMENTS))
}

fn read_list(path: &Option<PathBuf>) -> Result<std::collections::HashSet<String>, CliError> {
    match path {
        Some(p) => std::fs::read(p)
            .map(|b| read_word_list(&b))
            .map_err(data_err(p.display())),
        None => Ok(Default::default()),
    }
}

struct PreparedPlay {
    play_id: String,
    genre: String,
    forms: Vec<String>,
    lemma_count: usize,
    segments: Vec<Segment>,
}

fn prepare(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let entries = read_entries(ctx)?;
    let blocks = read_blocks(ctx.open(BLOCKS)?).map_err(data_err(BLOCKS))?;
    let texts: HashMap<&str, _> = blocks.iter().map(|b| (b.play_id.as_str(), b)).collect();
    let lexicon = match &ctx.paths.lexicon {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(data_err(p.display()))?;
            LemmaLexicon::from_tsv(&bytes).map_err(data_err(p.display()))?
        }
        None => LemmaLexicon::new(),
    };
    let prep = &ctx.cfg.prepare;
    let mut whitelist: BTreeSet<String> = prep.pos_whitelist.iter().cloned().collect();
    if prep.include_adverbs {
        whitelist.insert(prep.adverb_tag.clone());
    }
    let filter = ContentFilter {
        pos_whitelist: whitelist,
        stoplist: read_list(&ctx.paths.stoplist)?,
        name_list: read_list(&ctx.paths.names)?,
        name_pos_prefixes: prep.name_pos_prefixes.clone(),
    };
    let tagged_dir = ctx.paths.tagged_dir.as_deref();

    let prepared: Vec<PreparedPlay> = entries
        .par_iter()
        .map(|e| {
            let id = &e.meta.play_id;
            let tagged = tagged_dir.map(|d| d.join(format!("{id}.tsv"))).filter(|p| p.is_file());
            let tokens = match tagged {
                Some(path) => {
                    let bytes = std::fs::read(&path).map_err(data_err(path.display()))?;
                    let mut tokens = read_tagged_vertical(&bytes).map_err(data_err(path.display()))?;
                    if prep.lowercase {
                        for t in &mut tokens {
                            t.form = t.form.to_lowercase();
                        }
                    }
                    tokens
                }
                None => {
                    let text = texts
                        .get(id.as_str())
                        .ok_or_else(|| CliError::Data(format!("{BLOCKS} has no text for play {id}")))?;
                    let forms = tokenize(&text.joined_text(prep.include_stage_directions), prep.lowercase);
                    lemmatize(&forms, &lexicon)
                }
            };
            let lemmas = filter.apply(&tokens);
            Ok(PreparedPlay {
                play_id: id.clone(),
                genre: e.meta.genre.to_string(),
                forms: tokens.into_iter().map(|t| t.form).collect(),
                lemma_count: lemmas.len(),
                segments: segment_play(id, &lemmas, prep.target_len),
            })
        })
        .collect::<Result<_, CliError>>()?;

    for p in prepared.iter().filter(|p| p.segments.is_empty()) {
        log::warn!("play {} has no content lemmas and is dropped", p.play_id);
    }
    let segments: Vec<Segment> = prepared.iter().flat_map(|p| p.segments.iter().cloned()).collect();
    if segments.is_empty() {
        return Err(CliError::Data(
            "no segments: every play is empty after filtering".into(),
        ));
    }
    log::info!("prepare: {} segments from {} plays", segments.len(), prepared.len());
    out.write(SEGMENTS, |w| write_segments(w, &segments))?;
    out.write(TOKENS, |w| {
        for p in prepared.iter().filter(|p| !p.segments.is_empty()) {
            writeln!(w, "{}\t{}\t{}", p.play_id, p.genre, p.forms.join(" "))?;
        }
        Ok(())
    })?;
    out.write(PREP_SUMMARY, |w| {
        writeln!(w, "play_id\tgenre\ttokens\tcontent_lemmas\tsegments")?;
        for p in &prepared {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                p.play_id,
                p.genre,
                p.forms.len(),
                p.lemma_count,
                p.segments.len()
            )?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// sweep and model

/// `(play_id, genre)` for plays that have segments, in play-id order.
fn labeled_plays(ctx: &Context, segments: &[Segment]) -> Result<Vec<(String, String)>, CliError> {
    let with_segments: BTreeSet<&str> = segments.iter().map(|s| s.play_id.as_str()).collect();
    Ok(read_entries(ctx)?
        .into_iter()
        .filter(|e| with_segments.contains(e.meta.play_id.as_str()))
        .map(|e| (e.meta.play_id, e.meta.genre.to_string()))
        .collect())
}

fn sweep(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let segments = read_segments_file(ctx)?;
    let plays = labeled_plays(ctx, &segments)?;
    let vocab = build_vocab(&segments, ctx.cfg.model.min_doc_freq).map_err(data_err("vocabulary"))?;
    let grid = ctx.cfg.grid()?;
    let digest = format!(
        "{}{}",
        sha256_file(&ctx.path(SEGMENTS)).map_err(io_err(&ctx.path(SEGMENTS)))?,
        sha256_file(&ctx.path(PLAYS)).map_err(io_err(&ctx.path(PLAYS)))?
    );
    let opts = SweepOptions {
        jobs: ctx.jobs,
        checkpoint_dir: Some(ctx.path(SWEEP_CHECKPOINTS)),
        corpus_digest: digest,
    };
    let result = run_sweep(&segments, &vocab, &grid, &plays, &opts).map_err(|e| match e {
        SweepError::Checkpoint { .. } | SweepError::Pool(_) => CliError::Internal(e.to_string()),
        other => CliError::Data(format!("sweep: {other}")),
    })?;
    for cell in result.cells.iter().filter(|c| c.failed()) {
        log::warn!(
            "sweep cell K={} interval={:?} failed: {}",
            cell.num_topics,
            cell.optimize_interval,
            cell.error.as_deref().unwrap_or("")
        );
    }
    let best = select_best(&result).map_err(|e| CliError::Data(format!("sweep: {e}")))?;
    log::info!(
        "sweep: best K={} interval={:?} {} accuracy {:.4}",
        best.num_topics,
        best.optimize_interval,
        best.classifier,
        best.mean_accuracy
    );
    out.write(SWEEP_REPORT, |w| write_sweep_report(w, &result))?;
    out.json(SWEEP_RESULT, &result)?;
    out.json(SWEEP_BEST, &best)
}

fn model(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let segments = read_segments_file(ctx)?;
    let m = &ctx.cfg.model;
    let (k, interval) = if m.from_sweep {
        let best: BestCell = serde_json::from_reader(ctx.open(SWEEP_BEST)?).map_err(data_err(SWEEP_BEST))?;
        (best.num_topics, best.optimize_interval)
    } else {
        (m.num_topics, m.optimize_interval.0)
    };
    let vocab = build_vocab(&segments, m.min_doc_freq).map_err(data_err("vocabulary"))?;
    let params = ctx.cfg.model_params(k, interval, m.iterations, ctx.cfg.run.seed);
    log::info!(
        "model: K={k} interval={interval:?} over {} segments, {} types",
        segments.len(),
        vocab.len()
    );
    let model = train(&segments, &vocab, &params).map_err(data_err("training"))?;
    let path = ctx.path(MODEL);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    save_model(&model, &path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    out.files.push(MODEL.to_string());
    out.write(TOPICS, |w| {
        write_topic_report(&mut *w, &model, m.top_words).map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    out.write(DOC_TOPICS, |w| write_doc_topics(w, &model))
}

fn read_model(ctx: &Context) -> Result<TopicModel, CliError> {
    let path = ctx.path(MODEL);
    if !path.is_file() {
        return Err(CliError::MissingInput { path, stage: "model" });
    }
    load_model(&path).map_err(data_err(MODEL))
}

// ---------------------------------------------------------------------------
// evaluate

fn confusion_lines(w: &mut Vec<u8>, features: &str, results: &[(ClassifierSpec, CvResult)]) -> std::io::Result<()> {
    for (spec, r) in results {
        for (t, row) in r.confusion.iter().enumerate() {
            for (p, count) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{features}\t{}\t{}\t{}\t{count}",
                    spec.kind(),
                    r.classes[t],
                    r.classes[p]
                )?;
            }
        }
    }
    Ok(())
}

fn evaluate_features(
    features: &FeatureMatrix<f64>,
    specs: &[ClassifierSpec],
    ctx: &Context,
) -> Result<Vec<(ClassifierSpec, CvResult)>, CliError> {
    let opts = ctx.cfg.cv_options();
    specs
        .iter()
        .map(|spec| {
            let r =
                cross_validate(features, spec, &opts).map_err(data_err(format!("cross-validating {}", spec.kind())))?;
            Ok((spec.clone(), r))
        })
        .collect()
}

fn evaluate(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let segments = read_segments_file(ctx)?;
    let plays = labeled_plays(ctx, &segments)?;
    let model = read_model(ctx)?;
    let segment_play: HashMap<String, String> = segments
        .iter()
        .map(|s| (s.segment_id.clone(), s.play_id.clone()))
        .collect();
    let features: FeatureMatrix<f64> =
        play_topic_features(&model, &segment_play, &plays).map_err(data_err("topic features"))?;
    let specs = ctx.cfg.classifier_specs()?;
    let topic_results = evaluate_features(&features, &specs, ctx)?;

    let mut mfw_results = Vec::new();
    if ctx.cfg.evaluate.mfw {
        let mut docs = Vec::new();
        for line in std::io::BufRead::lines(ctx.open(TOKENS)?) {
            let line = line.map_err(data_err(TOKENS))?;
            let mut f = line.splitn(3, '\t');
            let (Some(id), Some(label), Some(tokens)) = (f.next(), f.next(), f.next()) else {
                return Err(CliError::Data(format!("{TOKENS}: malformed line")));
            };
            docs.push(PlayTokens {
                play_id: id.to_string(),
                label: label.to_string(),
                tokens: tokens
                    .split(' ')
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect(),
            });
        }
        let mfw: FeatureMatrix<f64> =
            mfw_zscore_features(&docs, ctx.cfg.evaluate.n_mfw).map_err(data_err("word features"))?;
        mfw_results = evaluate_features(&mfw, &specs, ctx)?;
        out.write(MFW_CV, |w| write_cv_report(w, &mfw_results))?;
    }

    out.write(FEATURES, |w| write_features(w, &features))?;
    out.write(CV, |w| write_cv_report(w, &topic_results))?;
    out.write(CONFUSION, |w| {
        writeln!(w, "features\tclassifier\ttrue\tpredicted\tcount")?;
        confusion_lines(w, "topics", &topic_results)?;
        confusion_lines(w, "mfw", &mfw_results)
    })?;
    out.write(EVAL_SUMMARY, |w| {
        writeln!(w, "features\tclassifier\tfolds\tmean_accuracy\tstd_accuracy\tbaseline")?;
        for (name, results) in [("topics", &topic_results), ("mfw", &mfw_results)] {
            for (spec, r) in results {
                writeln!(
                    w,
                    "{name}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                    spec.kind(),
                    r.folds,
                    r.mean_accuracy,
                    r.std_accuracy,
                    r.baseline_accuracy
                )?;
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Analysis {
    pub table: GenreTopicTable<f64>,
    /// Every topic, most distinctive first.
    pub ranked: Vec<usize>,
    /// Per topic: its three most probable words.
    pub labels: Vec<String>,
    pub distributions: Vec<SectionDistribution<f64>>,
}

/// Segments reordered to match the model's document rows.
fn segments_in_model_order(model: &TopicModel, segments: Vec<Segment>) -> Result<Vec<Segment>, CliError> {
    let mut by_id: HashMap<String, Segment> = segments.into_iter().map(|s| (s.segment_id.clone(), s)).collect();
    model
        .doc_ids
        .iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or_else(|| CliError::Data(format!("model document {id} is not in {SEGMENTS}")))
        })
        .collect()
}

fn topic_labels(model: &TopicModel) -> Result<Vec<String>, CliError> {
    (0..model.num_topics())
        .map(|t| {
            let words = model.top_words(t, 3).map_err(data_err("topic words"))?;
            Ok(words.into_iter().map(|(w, _)| w).collect::<Vec<_>>().join("-"))
        })
        .collect()
}

fn analyze(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let model = read_model(ctx)?;
    let segments = segments_in_model_order(&model, read_segments_file(ctx)?)?;
    let play_genre: HashMap<String, String> = labeled_plays(ctx, &segments)?.into_iter().collect();
    let info = segment_info(&segments, &play_genre).map_err(data_err("segments"))?;
    let present: BTreeSet<&str> = info.iter().map(|i| i.genre.as_str()).collect();
    let order: Vec<String> = ctx
        .cfg
        .filter
        .genres
        .iter()
        .filter(|g| present.contains(g.as_str()))
        .cloned()
        .collect();
    let table = genre_topic_table(&model.theta, &info, &order).map_err(data_err("genre table"))?;
    let k = model.num_topics();
    let ranked = top_distinctive(&table, k);
    let labels = topic_labels(&model)?;
    let a = &ctx.cfg.analyze;
    let box_topics: Vec<usize> = if a.boxplot_topics.is_empty() {
        ranked.iter().copied().take(2).collect()
    } else {
        a.boxplot_topics.clone()
    };
    let mut distributions = Vec::new();
    let mut tests = Vec::new();
    for &topic in &box_topics {
        if topic >= k {
            return Err(CliError::Data(format!(
                "analyze.boxplot_topics: topic {topic} exceeds K={k}"
            )));
        }
        for genre in a.boxplot_genres.iter().filter(|g| present.contains(g.as_str())) {
            distributions.push(section_distribution(&model.theta, &info, topic, genre).map_err(data_err("sections"))?);
            let by_section = section_values(&model.theta, &info, topic, genre).map_err(data_err("sections"))?;
            let test = mann_whitney(&by_section[0], &by_section[4]).ok();
            tests.push((topic, genre.clone(), by_section[0].len(), by_section[4].len(), test));
        }
    }
    let similarity = topic_cosine_similarity(&model.phi);
    let top: Vec<usize> = ranked.iter().copied().take(a.top_n).collect();

    out.write(GENRE_MEANS, |w| write_genre_means(w, &table))?;
    out.write(RANKING, |w| {
        writeln!(w, "rank\ttopic\tstd\tlabel")?;
        for (r, &t) in ranked.iter().enumerate() {
            writeln!(w, "{}\t{t}\t{:.6}\t{}", r + 1, table.stds_across_genres[t], labels[t])?;
        }
        Ok(())
    })?;
    out.write(HEATMAP, |w| write_heatmap(w, &table, &top, &labels))?;
    out.write(BOXPLOTS, |w| write_boxplot_data(w, &distributions))?;
    out.write(SECTION_TESTS, |w| {
        writeln!(w, "topic\tgenre\tn_section1\tn_section5\tu\tp_value\texact")?;
        for (topic, genre, n1, n5, test) in &tests {
            match test {
                Some(t) => writeln!(
                    w,
                    "{topic}\t{genre}\t{n1}\t{n5}\t{:.6}\t{:.6}\t{}",
                    t.u, t.p_value, t.exact
                )?,
                None => writeln!(w, "{topic}\t{genre}\t{n1}\t{n5}\tNA\tNA\tNA")?,
            }
        }
        Ok(())
    })?;
    out.write(SIMILARITY, |w| {
        let header: Vec<String> = (0..k).map(|t| format!("topic{t}")).collect();
        writeln!(w, "topic\t{}", header.join("\t"))?;
        for (t, row) in similarity.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "topic{t}\t{}", cells.join("\t"))?;
        }
        Ok(())
    })?;
    out.json(
        ANALYSIS,
        &Analysis {
            table,
            ranked,
            labels,
            distributions,
        },
    )
}

// ---------------------------------------------------------------------------
// cluster

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterState {
    pub play_ids: Vec<String>,
    pub genres: Vec<String>,
    pub pca: PcaResult<f64>,
    pub tree: MergeTree<f64>,
    pub threshold: f64,
    pub clusters: Vec<usize>,
}

fn cluster(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let features: FeatureMatrix<f64> = read_features(ctx.open(FEATURES)?).map_err(data_err(FEATURES))?;
    let c = &ctx.cfg.cluster;
    let n = features.n_rows();
    let n_comp = c.components.min(n.saturating_sub(1)).min(features.n_features());
    if n_comp < c.components {
        log::warn!("cluster: keeping {n_comp} components instead of {}", c.components);
    }
    let p = pca(&features.values, n_comp, c.standardize).map_err(data_err("PCA"))?;
    let tree = ward_linkage(&features.values).map_err(data_err("Ward linkage"))?;
    let cophenetic = cophenetic_correlation(&tree, &features.values).ok();
    let clusters = cut_tree(&tree, c.ward_threshold);
    let order: Vec<String> = {
        let present: BTreeSet<&str> = features.labels.iter().map(String::as_str).collect();
        let mut o: Vec<String> = ctx
            .cfg
            .filter
            .genres
            .iter()
            .filter(|g| present.contains(g.as_str()))
            .cloned()
            .collect();
        for g in present {
            if !o.iter().any(|x| x == g) {
                o.push(g.to_string());
            }
        }
        o
    };
    let composition = cluster_genre_composition(&clusters, &features.labels, &order);

    // PC scores against comedy (1) versus tragedy (0).
    let pair: Vec<usize> = (0..n)
        .filter(|&i| features.labels[i] == "comedy" || features.labels[i] == "tragedy")
        .collect();
    let in_class: Vec<bool> = pair.iter().map(|&i| features.labels[i] == "comedy").collect();
    let mut correlations = Vec::new();
    for comp in 0..n_comp {
        let scores: Vec<f64> = pair.iter().map(|&i| p.scores[i][comp]).collect();
        match pc_genre_correlation(&scores, &in_class) {
            Ok(r) => correlations.push((comp, r)),
            Err(e) => log::warn!("cluster: no genre correlation for PC{}: {e}", comp + 1),
        }
    }

    out.write(PCA_SCORES, |w| write_pca_scores(w, &features.row_ids, &p))?;
    out.write(LOADINGS, |w| write_loadings(w, &features.feature_names, &p))?;
    out.write(RATIOS, |w| write_ratios(w, &p))?;
    out.write(CORRELATION, |w| {
        writeln!(w, "component\tr\tt\tp_value\tn")?;
        for (comp, r) in &correlations {
            writeln!(w, "PC{}\t{:.6}\t{:.6}\t{:.6}\t{}", comp + 1, r.r, r.t, r.p_value, r.n)?;
        }
        Ok(())
    })?;
    out.write(LINKAGE, |w| write_linkage(w, &tree))?;
    out.write(CLUSTERS, |w| {
        writeln!(w, "play_id\tgenre\tcluster")?;
        for i in 0..n {
            writeln!(w, "{}\t{}\t{}", features.row_ids[i], features.labels[i], clusters[i])?;
        }
        Ok(())
    })?;
    out.write(COMPOSITION, |w| {
        writeln!(w, "cluster\tsize\t{}\tpurity", order.join("\t"))?;
        for comp in &composition {
            let counts: Vec<String> = comp.counts.iter().map(|c| c.to_string()).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{:.6}",
                comp.cluster,
                comp.size,
                counts.join("\t"),
                comp.purity
            )?;
        }
        Ok(())
    })?;
    out.write(CLUSTER_SUMMARY, |w| {
        let coph = cophenetic.map_or("NA".to_string(), |r| format!("{r:.6}"));
        writeln!(w, "cophenetic_correlation\t{coph}")?;
        writeln!(w, "ward_threshold\t{}", c.ward_threshold)?;
        writeln!(w, "clusters\t{}", composition.len())?;
        writeln!(w, "components\t{n_comp}")
    })?;
    out.json(
        CLUSTER_STATE,
        &ClusterState {
            play_ids: features.row_ids.clone(),
            genres: features.labels.clone(),
            pca: p,
            tree,
            threshold: c.ward_threshold,
            clusters,
        },
    )
}

// ---------------------------------------------------------------------------
// render

fn read_json<T: for<'de> Deserialize<'de>>(ctx: &Context, rel: &'static str) -> Result<T, CliError> {
    serde_json::from_reader(ctx.open(rel)?).map_err(data_err(rel))
}

fn render(ctx: &Context, out: &mut Outputs) -> Result<(), CliError> {
    let model = read_model(ctx)?;
    let analysis: Analysis = read_json(ctx, ANALYSIS)?;
    let state: ClusterState = read_json(ctx, CLUSTER_STATE)?;
    let palette = Palette::default();
    let fig_err = |what: &'static str| move |e: tmwr_core::report::ReportError| CliError::Data(format!("{what}: {e}"));
    let n_words = ctx.cfg.analyze.wordcloud_words;

    for t in 0..model.num_topics() {
        let words = model.top_words(t, n_words).map_err(data_err("topic words"))?;
        let fig = wordcloud(&words, n_words).map_err(fig_err("word cloud"))?;
        let sizes = wordcloud_sizes(&words.iter().map(|w| w.1).collect::<Vec<_>>());
        out.svg(&format!("wordcloud_topic{t:03}"), &fig, |w| {
            writeln!(w, "rank\tword\tprobability\tfont_size")?;
            for (r, ((word, p), size)) in words.iter().zip(&sizes).enumerate() {
                writeln!(w, "{}\t{word}\t{p:.6}\t{size:.2}", r + 1)?;
            }
            Ok(())
        })?;
    }

    let top: Vec<usize> = analysis.ranked.iter().copied().take(ctx.cfg.analyze.top_n).collect();
    let fig = heatmap(
        &analysis.table,
        &analysis.ranked,
        ctx.cfg.analyze.top_n,
        &analysis.labels,
        &palette,
    )
    .map_err(fig_err("heatmap"))?;
    out.svg("heatmap", &fig, |w| {
        write_heatmap(w, &analysis.table, &top, &analysis.labels)
    })?;

    if analysis.distributions.is_empty() {
        log::warn!("render: no section distributions, skipping box plots");
    } else {
        let fig = boxplots(&analysis.distributions, &palette).map_err(fig_err("box plots"))?;
        out.svg("boxplots", &fig, |w| write_boxplot_data(w, &analysis.distributions))?;
    }

    if ctx.cfg.sweep.enabled {
        let result: SweepResult = read_json(ctx, SWEEP_RESULT)?;
        let fig = sweep_chart(&result, &palette).map_err(fig_err("sweep chart"))?;
        out.svg("sweep", &fig, |w| write_sweep_report(w, &result))?;
    }

    if state.pca.component_loadings.len() >= 2 {
        let fig = scatter(&state.pca, &state.genres, &palette).map_err(fig_err("PCA scatter"))?;
        out.svg("pca", &fig, |w| write_pca_scores(w, &state.play_ids, &state.pca))?;
    } else {
        log::warn!("render: fewer than two components, skipping PCA scatter");
    }

    let labels: Vec<String> = state
        .play_ids
        .iter()
        .zip(&state.genres)
        .map(|(id, g)| leaf_label(id, g))
        .collect();
    let fig = dendrogram(&state.tree, state.threshold, &labels, &palette).map_err(fig_err("dendrogram"))?;
    out.svg("dendrogram", &fig, |w| {
        writeln!(w, "position\tplay_id\tlabel\tcluster")?;
        for (pos, leaf) in state.tree.leaf_order().into_iter().enumerate() {
            writeln!(
                w,
                "{pos}\t{}\t{}\t{}",
                state.play_ids[leaf], labels[leaf], state.clusters[leaf]
            )?;
        }
        Ok(())
    })
}
