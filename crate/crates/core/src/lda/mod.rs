//! Latent Dirichlet allocation trained by collapsed Gibbs sampling, with
//! periodic re-estimation of an asymmetric document-topic prior.

mod hyper;
mod io;
mod sampler;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lingpipe::Segment;

pub use hyper::optimize_alpha;
pub use io::{
    load_model, read_model, save_model, write_doc_topics, write_model, write_topic_report, FORMAT_MAJOR, MODEL_MAGIC,
};
pub use sampler::{train, train_with_observer, GibbsSampler};

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("no lemma survives the vocabulary cut-off")]
    EmptyVocabulary,
    #[error("no documents to train on")]
    EmptyCorpus,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("topic id {0} out of range")]
    BadTopicId(usize),
    #[error("unsupported model format `{found}`")]
    FormatVersionMismatch { found: String },
    #[error("model file line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bijection between lemmas and dense ids, ordered by descending corpus
/// frequency with lexicographic tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    lemmas: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, u32>,
    doc_freq: Vec<usize>,
    corpus_freq: Vec<usize>,
}

impl Vocabulary {
    pub(crate) fn from_parts(lemmas: Vec<String>, doc_freq: Vec<usize>, corpus_freq: Vec<usize>) -> Self {
        let ids = lemmas.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
        Vocabulary {
            lemmas,
            ids,
            doc_freq,
            corpus_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn id(&self, lemma: &str) -> Option<u32> {
        self.ids.get(lemma).copied()
    }

    pub fn lemma(&self, id: u32) -> &str {
        &self.lemmas[id as usize]
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    pub fn doc_freq(&self, id: u32) -> usize {
        self.doc_freq[id as usize]
    }

    pub fn corpus_freq(&self, id: u32) -> usize {
        self.corpus_freq[id as usize]
    }

    pub fn total_tokens(&self) -> usize {
        self.corpus_freq.iter().sum()
    }

    /// Maps segments to id sequences, dropping out-of-vocabulary lemmas.
    /// Returns the documents and the number of dropped tokens.
    pub fn encode(&self, segments: &[Segment]) -> (Vec<Vec<u32>>, usize) {
        let mut dropped = 0;
        let docs = segments
            .iter()
            .map(|s| {
                s.lemmas
                    .iter()
                    .filter_map(|l| {
                        let id = self.id(l);
                        if id.is_none() {
                            dropped += 1;
                        }
                        id
                    })
                    .collect()
            })
            .collect();
        (docs, dropped)
    }
}

pub fn build_vocab(segments: &[Segment], min_doc_freq: usize) -> Result<Vocabulary, LdaError> {
    if segments.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    for s in segments {
        let mut seen = std::collections::HashSet::new();
        for l in &s.lemmas {
            let e = stats.entry(l.as_str()).or_insert((0, 0));
            e.1 += 1;
            if seen.insert(l.as_str()) {
                e.0 += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize, usize)> = stats
        .into_iter()
        .filter(|&(_, (df, _))| df >= min_doc_freq.max(1))
        .map(|(l, (df, cf))| (l, df, cf))
        .collect();
    if kept.is_empty() {
        return Err(LdaError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_parts(
        kept.iter().map(|k| k.0.to_string()).collect(),
        kept.iter().map(|k| k.1).collect(),
        kept.iter().map(|k| k.2).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub num_topics: usize,
    pub iterations: usize,
    /// Sweeps between alpha re-estimations; `None` disables optimization.
    pub optimize_interval: Option<usize>,
    /// First sweep at which alpha is re-estimated; defaults to the interval.
    pub optimize_burn_in: Option<usize>,
    pub beta: f64,
    /// Initial total of the symmetric alpha vector.
    pub alpha_sum: f64,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            num_topics: 60,
            iterations: 6000,
            optimize_interval: None,
            optimize_burn_in: None,
            beta: 0.01,
            alpha_sum: 5.0,
            seed: 1,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), LdaError> {
        let bad = |m: String| Err(LdaError::InvalidParams(m));
        if self.num_topics == 0 {
            return bad("num_topics must be at least 1".into());
        }
        if self.num_topics > u32::MAX as usize {
            return bad("num_topics too large".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.alpha_sum > 0.0 && self.alpha_sum.is_finite()) {
            return bad(format!("alpha_sum must be positive, got {}", self.alpha_sum));
        }
        if let Some(interval) = self.optimize_interval {
            if interval == 0 || interval > self.iterations {
                return bad(format!("optimize_interval {interval} outside 1..={}", self.iterations));
            }
        }
        if self.optimize_burn_in.is_some() && self.optimize_interval.is_none() {
            return bad("optimize_burn_in set without optimize_interval".into());
        }
        Ok(())
    }

    pub fn burn_in(&self) -> Option<usize> {
        self.optimize_interval.map(|i| self.optimize_burn_in.unwrap_or(i))
    }

    /// Whether alpha is re-estimated right after 1-based sweep `sweep`.
    pub fn optimizes_after(&self, sweep: usize) -> bool {
        match (self.optimize_interval, self.burn_in()) {
            (Some(interval), Some(burn_in)) => sweep >= burn_in && (sweep - burn_in) % interval == 0,
            _ => false,
        }
    }
}

/// A trained model: final assignments, hyperparameters and the smoothed
/// topic-word (`phi`, K x V) and document-topic (`theta`, D x K) matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub doc_ids: Vec<String>,
    pub docs: Vec<Vec<u32>>,
    pub assignments: Vec<Vec<u32>>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub dropped_tokens: usize,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

/// Count tables recomputed from assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    /// D x K
    pub doc_topic: Vec<Vec<u32>>,
    /// K x V
    pub topic_word: Vec<Vec<u32>>,
    pub topic_totals: Vec<u64>,
}

impl CountTables {
    pub fn from_assignments(docs: &[Vec<u32>], assignments: &[Vec<u32>], num_topics: usize, vocab_size: usize) -> Self {
        let mut t = CountTables {
            doc_topic: vec![vec![0; num_topics]; docs.len()],
            topic_word: vec![vec![0; vocab_size]; num_topics],
            topic_totals: vec![0; num_topics],
        };
        for (d, (words, zs)) in docs.iter().zip(assignments).enumerate() {
            for (&w, &z) in words.iter().zip(zs) {
                t.doc_topic[d][z as usize] += 1;
                t.topic_word[z as usize][w as usize] += 1;
                t.topic_totals[z as usize] += 1;
            }
        }
        t
    }
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn doc_lengths(&self) -> Vec<usize> {
        self.docs.iter().map(Vec::len).collect()
    }

    pub fn counts(&self) -> CountTables {
        CountTables::from_assignments(&self.docs, &self.assignments, self.num_topics(), self.vocab.len())
    }

    /// Token-weighted mean of theta over all documents, with topic ids in
    /// descending probability order (ties by id).
    pub fn topic_overall_probabilities(&self) -> (Vec<f64>, Vec<usize>) {
        let k = self.num_topics();
        let mut p = vec![0.0; k];
        let mut total = 0.0;
        for (row, doc) in self.theta.iter().zip(&self.docs) {
            let len = doc.len() as f64;
            total += len;
            for (acc, &t) in p.iter_mut().zip(row) {
                *acc += len * t;
            }
        }
        if total > 0.0 {
            for x in &mut p {
                *x /= total;
            }
        } else {
            p.fill(1.0 / k as f64);
        }
        let mut rank: Vec<usize> = (0..k).collect();
        rank.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        (p, rank)
    }

    /// The `n` most probable lemmas of a topic, ties by lemma id.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<(String, f64)>, LdaError> {
        let row = self.phi.get(topic).ok_or(LdaError::BadTopicId(topic))?;
        Ok(top_indices(row, n)
            .into_iter()
            .map(|w| (self.vocab.lemma(w as u32).to_string(), row[w]))
            .collect())
    }
}

pub(crate) fn top_indices(row: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

pub(crate) fn smoothed_distributions(
    counts: &CountTables,
    alpha: &[f64],
    beta: f64,
    vocab_size: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let v_beta = vocab_size as f64 * beta;
    let phi = counts
        .topic_word
        .iter()
        .zip(&counts.topic_totals)
        .map(|(row, &total)| {
            let denom = total as f64 + v_beta;
            row.iter().map(|&c| (c as f64 + beta) / denom).collect()
        })
        .collect();
    let alpha_sum: f64 = alpha.iter().sum();
    let theta = counts
        .doc_topic
        .iter()
        .map(|row| {
            let len: u32 = row.iter().sum();
            let denom = len as f64 + alpha_sum;
            row.iter().zip(alpha).map(|(&c, &a)| (c as f64 + a) / denom).collect()
        })
        .collect();
    (phi, theta)
}
