//! Pipeline configuration: a sectioned TOML file plus `--set` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use tmwr_core::corpus::{FilterCriteria, Genre, GenreTable};
use tmwr_core::evalml::{ClassifierKind, ClassifierSpec, CvOptions, DistanceMetric};
use tmwr_core::lda::ModelParams;
use tmwr_core::sweep::GridSpec;

use crate::error::CliError;

/// An optional sweep count written as an integer or the string `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Interval(pub Option<usize>);

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_u64(v as u64),
            None => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct IntervalVisitor;
        impl Visitor<'_> for IntervalVisitor {
            type Value = Interval;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer or \"none\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Interval, E> {
                if v <= 0 {
                    return Err(E::custom(format!("interval must be positive, got {v}")));
                }
                Ok(Interval(Some(v as usize)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Interval, E> {
                self.visit_i64(v as i64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Interval, E> {
                if v.eq_ignore_ascii_case("none") {
                    Ok(Interval(None))
                } else {
                    v.parse::<i64>()
                        .map_err(|_| E::custom(format!("expected integer or \"none\", got {v:?}")))
                        .and_then(|n| self.visit_i64(n))
                }
            }
        }
        d.deserialize_any(IntervalVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of TEI files.
    pub corpus_dir: String,
    /// Optional CSV overriding header metadata.
    pub metadata: String,
    /// Lemma lexicon TSV (form, pos, lemma).
    pub lexicon: String,
    /// Optional directory of pre-tagged `<play_id>.tsv` files; when set it
    /// replaces lexicon lookup for the plays it covers.
    pub tagged_dir: String,
    pub stoplist: String,
    pub names: String,
    pub output: String,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus_dir: "corpus".into(),
            metadata: String::new(),
            lexicon: "lexicon.tsv".into(),
            tagged_dir: String::new(),
            stoplist: String::new(),
            names: String::new(),
            output: "output".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub year_min: i32,
    pub year_max: i32,
    pub act_min: u32,
    pub act_max: u32,
    pub genres: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let d = FilterCriteria::default();
        FilterConfig {
            year_min: d.year_min,
            year_max: d.year_max,
            act_min: d.act_min,
            act_max: d.act_max,
            genres: vec!["comedy".into(), "tragedy".into(), "tragicomedy".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub target_len: usize,
    pub lowercase: bool,
    pub include_stage_directions: bool,
    pub pos_whitelist: Vec<String>,
    pub include_adverbs: bool,
    pub adverb_tag: String,
    pub name_pos_prefixes: Vec<String>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            target_len: 1000,
            lowercase: true,
            include_stage_directions: false,
            pos_whitelist: vec!["NOM".into(), "VER".into(), "ADJ".into()],
            include_adverbs: false,
            adverb_tag: "ADV".into(),
            name_pos_prefixes: vec!["NAM".into(), "NP".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_topics: usize,
    pub iterations: usize,
    pub optimize_interval: Interval,
    /// `"none"` starts optimizing after the first interval.
    pub optimize_burn_in: Interval,
    pub beta: f64,
    pub alpha_sum: f64,
    pub min_doc_freq: usize,
    pub top_words: usize,
    /// Take `num_topics` and `optimize_interval` from the sweep's best cell.
    pub from_sweep: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ModelParams::default();
        ModelConfig {
            num_topics: 60,
            iterations: d.iterations,
            optimize_interval: Interval(Some(300)),
            optimize_burn_in: Interval(None),
            beta: d.beta,
            alpha_sum: d.alpha_sum,
            min_doc_freq: 1,
            top_words: 50,
            from_sweep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub enabled: bool,
    pub topic_counts: Vec<usize>,
    pub optimize_intervals: Vec<Interval>,
    pub iterations: usize,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let d = GridSpec::default();
        SweepConfig {
            enabled: true,
            topic_counts: d.topic_counts,
            optimize_intervals: d.optimize_intervals.into_iter().map(Interval).collect(),
            iterations: d.iterations,
            repeats: d.repeats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifiersConfig {
    pub kinds: Vec<String>,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub knn_k: usize,
    pub knn_metric: String,
    pub sgd_learning_rate: f64,
    pub sgd_epochs: usize,
    pub sgd_l2: f64,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
}

impl Default for ClassifiersConfig {
    fn default() -> Self {
        ClassifiersConfig {
            kinds: ClassifierKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            svm_c: 1.0,
            svm_epochs: 200,
            knn_k: 5,
            knn_metric: "euclidean".into(),
            sgd_learning_rate: 0.1,
            sgd_epochs: 200,
            sgd_l2: 1e-4,
            tree_max_depth: 10,
            tree_min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub folds: usize,
    pub stratified: bool,
    /// Also evaluate the most-frequent-word z-score baseline.
    pub mfw: bool,
    pub n_mfw: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            folds: 10,
            stratified: true,
            mfw: true,
            n_mfw: 3500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub top_n: usize,
    pub wordcloud_words: usize,
    /// Topics to plot by section; empty picks the two most distinctive.
    pub boxplot_topics: Vec<usize>,
    pub boxplot_genres: Vec<String>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            top_n: 20,
            wordcloud_words: 40,
            boxplot_topics: Vec::new(),
            boxplot_genres: vec!["tragedy".into(), "comedy".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub components: usize,
    pub ward_threshold: f64,
    pub standardize: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            components: 3,
            ward_threshold: 1.3,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 1, jobs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub filter: FilterConfig,
    /// Extra genre labels, mapping a header label to a canonical genre.
    pub genre_labels: BTreeMap<String, String>,
    pub prepare: PrepareConfig,
    pub model: ModelConfig,
    pub sweep: SweepConfig,
    pub classifiers: ClassifiersConfig,
    pub evaluate: EvaluateConfig,
    pub analyze: AnalyzeConfig,
    pub cluster: ClusterConfig,
    pub run: RunConfig,
}

fn default_table() -> toml::Table {
    match toml::Value::try_from(PipelineConfig::default()) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("defaults serialize to a table"),
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses the right-hand side of `--set`; anything that is not a TOML
/// value is taken as a bare string.
pub fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` to a raw table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("--set expects section.key=value, got {assignment:?}")))?;
    let key = key.trim();
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| config_err(format!("--set key {key:?} must look like section.key")))?;
    let defaults = default_table();
    match defaults.get(section) {
        Some(toml::Value::Table(fields)) => {
            if section != "genre_labels" && !fields.contains_key(field) {
                return Err(config_err(format!("--set {key}: unknown key `{field}` in [{section}]")));
            }
        }
        _ => return Err(config_err(format!("--set {key}: unknown section `{section}`"))),
    }
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), parse_override_value(value.trim()));
            Ok(())
        }
        _ => Err(config_err(format!("`{section}` is not a section"))),
    }
}

impl PipelineConfig {
    /// Parses TOML text, then applies overrides. `origin` names the source
    /// in diagnostics.
    pub fn from_toml(text: &str, origin: &str, overrides: &[String]) -> Result<Self, CliError> {
        // Parsing the text directly keeps line and column in diagnostics.
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e: toml::de::Error| config_err(format!("{origin}: {e}")))?;
        if !overrides.is_empty() {
            let mut table: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| config_err(format!("{origin}: {e}")))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            cfg = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| config_err(format!("--set: {e}")))?;
        }
        cfg.check_ranges()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text, &p.display().to_string(), overrides)
            }
            None => Self::from_toml("", "defaults", overrides),
        }
    }

    fn check_ranges(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(config_err(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive("prepare.target_len", self.prepare.target_len)?;
        positive("model.num_topics", self.model.num_topics)?;
        positive("model.iterations", self.model.iterations)?;
        positive("model.min_doc_freq", self.model.min_doc_freq)?;
        positive("model.top_words", self.model.top_words)?;
        positive("sweep.iterations", self.sweep.iterations)?;
        positive("sweep.repeats", self.sweep.repeats)?;
        positive("evaluate.n_mfw", self.evaluate.n_mfw)?;
        positive("analyze.top_n", self.analyze.top_n)?;
        positive("analyze.wordcloud_words", self.analyze.wordcloud_words)?;
        positive("cluster.components", self.cluster.components)?;
        if self.evaluate.folds < 2 {
            return Err(config_err("evaluate.folds must be at least 2"));
        }
        if self.filter.year_min > self.filter.year_max {
            return Err(config_err("filter.year_min exceeds filter.year_max"));
        }
        if self.filter.act_min > self.filter.act_max {
            return Err(config_err("filter.act_min exceeds filter.act_max"));
        }
        if self.filter.genres.is_empty() {
            return Err(config_err("filter.genres is empty"));
        }
        if !(self.model.beta > 0.0 && self.model.beta.is_finite()) {
            return Err(config_err("model.beta must be positive"));
        }
        if !(self.model.alpha_sum > 0.0 && self.model.alpha_sum.is_finite()) {
            return Err(config_err("model.alpha_sum must be positive"));
        }
        if !(self.cluster.ward_threshold > 0.0 && self.cluster.ward_threshold.is_finite()) {
            return Err(config_err("cluster.ward_threshold must be positive"));
        }
        if self.sweep.enabled && (self.sweep.topic_counts.is_empty() || self.sweep.optimize_intervals.is_empty()) {
            return Err(config_err(
                "sweep.topic_counts and sweep.optimize_intervals must be non-empty",
            ));
        }
        if self.sweep.topic_counts.contains(&0) {
            return Err(config_err("sweep.topic_counts entries must be at least 1"));
        }
        if self.model.from_sweep && !self.sweep.enabled {
            return Err(config_err("model.from_sweep requires sweep.enabled"));
        }
        self.model_params(
            self.model.num_topics,
            self.model.optimize_interval.0,
            self.model.iterations,
            0,
        )
        .validate()
        .map_err(|e| config_err(format!("[model] {e}")))?;
        for k in &self.classifiers.kinds {
            if ClassifierKind::parse(k).is_none() {
                return Err(config_err(format!("classifiers.kinds: unknown classifier {k:?}")));
            }
        }
        if self.classifiers.kinds.is_empty() {
            return Err(config_err("classifiers.kinds is empty"));
        }
        self.distance_metric()?;
        for spec in self.classifier_specs()? {
            spec.validate().map_err(|e| config_err(format!("[classifiers] {e}")))?;
        }
        Ok(())
    }

    fn distance_metric(&self) -> Result<DistanceMetric, CliError> {
        match self.classifiers.knn_metric.as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "manhattan" => Ok(DistanceMetric::Manhattan),
            other => Err(config_err(format!(
                "classifiers.knn_metric: expected euclidean or manhattan, got {other:?}"
            ))),
        }
    }

    pub fn classifier_specs(&self) -> Result<Vec<ClassifierSpec>, CliError> {
        let c = &self.classifiers;
        let metric = self.distance_metric()?;
        c.kinds
            .iter()
            .map(|k| {
                let kind = ClassifierKind::parse(k).ok_or_else(|| config_err(format!("unknown classifier {k:?}")))?;
                Ok(match kind {
                    ClassifierKind::LinearSvm => ClassifierSpec::LinearSvm {
                        c: c.svm_c,
                        epochs: c.svm_epochs,
                    },
                    ClassifierKind::Knn => ClassifierSpec::Knn { k: c.knn_k, metric },
                    ClassifierKind::SgdLogistic => ClassifierSpec::SgdLogistic {
                        learning_rate: c.sgd_learning_rate,
                        epochs: c.sgd_epochs,
                        regularization: c.sgd_l2,
                    },
                    ClassifierKind::DecisionTree => ClassifierSpec::DecisionTree {
                        max_depth: c.tree_max_depth,
                        min_leaf: c.tree_min_leaf,
                    },
                })
            })
            .collect()
    }

    pub fn model_params(&self, k: usize, interval: Option<usize>, iterations: usize, seed: u64) -> ModelParams {
        ModelParams {
            num_topics: k,
            iterations,
            optimize_interval: interval,
            optimize_burn_in: interval.and(self.model.optimize_burn_in.0),
            beta: self.model.beta,
            alpha_sum: self.model.alpha_sum,
            seed,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            folds: self.evaluate.folds,
            seed: self.run.seed,
            stratified: self.evaluate.stratified,
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        Ok(GridSpec {
            topic_counts: self.sweep.topic_counts.clone(),
            optimize_intervals: self.sweep.optimize_intervals.iter().map(|i| i.0).collect(),
            iterations: self.sweep.iterations,
            base_seed: self.run.seed,
            classifiers: self.classifier_specs()?,
            repeats: self.sweep.repeats,
            cv: self.cv_options(),
            model: self.model_params(self.model.num_topics, None, self.sweep.iterations, self.run.seed),
        })
    }

    pub fn genre_table(&self) -> GenreTable {
        let mut table = GenreTable::default();
        for (label, genre) in &self.genre_labels {
            table.insert(label, Genre::from_canonical(genre));
        }
        table
    }

    pub fn filter_criteria(&self) -> FilterCriteria {
        FilterCriteria {
            year_min: self.filter.year_min,
            year_max: self.filter.year_max,
            act_min: self.filter.act_min,
            act_max: self.filter.act_max,
            genres: self.filter.genres.iter().map(|g| Genre::from_canonical(g)).collect(),
        }
    }
}

/// Resolves configured paths against the config file's directory.
#[derive(Debug, Clone)]
pub struct ResolvedPaths {
    pub corpus_dir: PathBuf,
    pub metadata: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub tagged_dir: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub names: Option<PathBuf>,
}

fn resolve(base: &Path, p: &str) -> Option<PathBuf> {
    if p.is_empty() {
        None
    } else if Path::new(p).is_absolute() {
        Some(PathBuf::from(p))
    } else {
        Some(base.join(p))
    }
}

impl ResolvedPaths {
    /// Fails when a configured input is missing.
    pub fn new(cfg: &PathsConfig, base: &Path) -> Result<Self, CliError> {
        let corpus_dir = resolve(base, &cfg.corpus_dir).ok_or_else(|| config_err("paths.corpus_dir is empty"))?;
        let tagged_dir = resolve(base, &cfg.tagged_dir);
        let resolved = ResolvedPaths {
            corpus_dir,
            metadata: resolve(base, &cfg.metadata),
            lexicon: resolve(base, &cfg.lexicon),
            tagged_dir,
            stoplist: resolve(base, &cfg.stoplist),
            names: resolve(base, &cfg.names),
        };
        if !resolved.corpus_dir.is_dir() {
            return Err(config_err(format!(
                "paths.corpus_dir: {} is not a directory",
                resolved.corpus_dir.display()
            )));
        }
        if resolved.lexicon.is_none() && resolved.tagged_dir.is_none() {
            return Err(config_err("one of paths.lexicon or paths.tagged_dir must be set"));
        }
        for (key, p) in [
            ("paths.metadata", &resolved.metadata),
            ("paths.lexicon", &resolved.lexicon),
            ("paths.tagged_dir", &resolved.tagged_dir),
            ("paths.stoplist", &resolved.stoplist),
            ("paths.names", &resolved.names),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(config_err(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        Ok(resolved)
    }
}

fn render_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) if s.is_empty() => "\"\" (unset)".into(),
        other => other.to_string(),
    }
}

/// Every configuration key with its default, one `section.key = value` per line.
pub fn config_keys_help() -> String {
    let defaults = default_table();
    let mut out = String::from("Configuration keys (set in the config file or with --set section.key=value):\n");
    for (section, fields) in &defaults {
        match fields {
            toml::Value::Table(t) if !t.is_empty() => {
                for (key, value) in t {
                    out.push_str(&format!("  {section}.{key} = {}\n", render_value(value)));
                }
            }
            _ => out.push_str(&format!("  {section}.<label> = <genre>   (default: none)\n")),
        }
    }
    out
}
