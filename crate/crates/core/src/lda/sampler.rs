use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hyper::optimize_alpha;
use super::{smoothed_distributions, CountTables, LdaError, ModelParams, TopicModel, Vocabulary};
use crate::lingpipe::Segment;
use crate::special::ln_gamma;

/// Collapsed Gibbs sampler state.
///
/// Randomness comes from a ChaCha8 stream seeded with `ModelParams::seed`;
/// the whole run is single-threaded, so a seed fixes every assignment.
/// Count tables are kept incrementally; `word_topic` is word-major so the
/// per-token scan over topics touches contiguous memory.
pub struct GibbsSampler {
    num_topics: usize,
    vocab_size: usize,
    beta: f64,
    alpha: Vec<f64>,
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    doc_topic: Vec<u32>,
    word_topic: Vec<u32>,
    topic_totals: Vec<u64>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    sweeps_done: usize,
}

impl GibbsSampler {
    /// Assigns every token a uniformly random topic.
    pub fn new(docs: Vec<Vec<u32>>, vocab_size: usize, params: &ModelParams) -> Result<Self, LdaError> {
        params.validate()?;
        if docs.is_empty() {
            return Err(LdaError::EmptyCorpus);
        }
        let k = params.num_topics;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut s = GibbsSampler {
            num_topics: k,
            vocab_size,
            beta: params.beta,
            alpha: vec![params.alpha_sum / k as f64; k],
            z: Vec::with_capacity(docs.len()),
            doc_topic: vec![0; docs.len() * k],
            word_topic: vec![0; vocab_size * k],
            topic_totals: vec![0; k],
            weights: vec![0.0; k],
            docs: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            sweeps_done: 0,
        };
        for (d, words) in docs.iter().enumerate() {
            let mut zs = Vec::with_capacity(words.len());
            for &w in words {
                assert!((w as usize) < vocab_size, "word id {w} outside vocabulary");
                let t = rng.gen_range(0..k);
                zs.push(t as u32);
                s.doc_topic[d * k + t] += 1;
                s.word_topic[w as usize * k + t] += 1;
                s.topic_totals[t] += 1;
            }
            s.z.push(zs);
        }
        s.docs = docs;
        s.rng = rng;
        Ok(s)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    /// Current incremental count tables, in the layout of [`CountTables`].
    pub fn count_tables(&self) -> CountTables {
        let k = self.num_topics;
        let mut topic_word = vec![vec![0; self.vocab_size]; k];
        for w in 0..self.vocab_size {
            for t in 0..k {
                topic_word[t][w] = self.word_topic[w * k + t];
            }
        }
        CountTables {
            doc_topic: self.doc_topic.chunks(k).map(<[u32]>::to_vec).collect(),
            topic_word,
            topic_totals: self.topic_totals.clone(),
        }
    }

    /// True when recounting from the assignments reproduces the incremental
    /// tables exactly.
    pub fn counts_consistent(&self) -> bool {
        CountTables::from_assignments(&self.docs, &self.z, self.num_topics, self.vocab_size) == self.count_tables()
    }

    /// One full pass over every token.
    pub fn sweep(&mut self) {
        let k = self.num_topics;
        let v_beta = self.vocab_size as f64 * self.beta;
        let beta = self.beta;
        let mut denom: Vec<f64> = self.topic_totals.iter().map(|&n| n as f64 + v_beta).collect();
        for d in 0..self.docs.len() {
            let dt = d * k;
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i] as usize;
                let wt = w * k;
                let old = self.z[d][i] as usize;
                self.doc_topic[dt + old] -= 1;
                self.word_topic[wt + old] -= 1;
                self.topic_totals[old] -= 1;
                denom[old] -= 1.0;

                let mut total = 0.0;
                for t in 0..k {
                    let weight = (self.doc_topic[dt + t] as f64 + self.alpha[t])
                        * (self.word_topic[wt + t] as f64 + beta)
                        / denom[t];
                    total += weight;
                    self.weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = self.weights.iter().position(|&c| c > u).unwrap_or(k - 1);

                self.z[d][i] = new as u32;
                self.doc_topic[dt + new] += 1;
                self.word_topic[wt + new] += 1;
                self.topic_totals[new] += 1;
                denom[new] += 1.0;
            }
        }
        self.sweeps_done += 1;
    }

    /// Unnormalized conditional weights for token `i` of document `d`, with
    /// that token removed from the counts.
    pub fn conditional_weights(&self, d: usize, i: usize) -> Vec<f64> {
        let k = self.num_topics;
        let w = self.docs[d][i] as usize;
        let old = self.z[d][i] as usize;
        let v_beta = self.vocab_size as f64 * self.beta;
        (0..k)
            .map(|t| {
                let own = u32::from(t == old);
                let ndk = (self.doc_topic[d * k + t] - own) as f64;
                let nkw = (self.word_topic[w * k + t] - own) as f64;
                let nk = (self.topic_totals[t] - u64::from(own)) as f64;
                (ndk + self.alpha[t]) * (nkw + self.beta) / (nk + v_beta)
            })
            .collect()
    }

    /// Re-estimates alpha from the current document-topic counts.
    pub fn optimize_alpha(&mut self) {
        let lengths: Vec<u32> = self.docs.iter().map(|d| d.len() as u32).collect();
        self.alpha = optimize_alpha(&self.doc_topic, &lengths, &self.alpha);
    }

    /// Joint log-likelihood `log p(w, z | alpha, beta)` of the current state.
    pub fn log_likelihood(&self) -> f64 {
        let k = self.num_topics;
        let v = self.vocab_size as f64;
        let beta = self.beta;
        let lg_beta = ln_gamma(beta);
        let mut ll = 0.0;
        for t in 0..k {
            ll += ln_gamma(v * beta) - ln_gamma(self.topic_totals[t] as f64 + v * beta);
        }
        for w in 0..self.vocab_size {
            for t in 0..k {
                let n = self.word_topic[w * k + t];
                if n > 0 {
                    ll += ln_gamma(n as f64 + beta) - lg_beta;
                }
            }
        }
        let alpha_sum: f64 = self.alpha.iter().sum();
        let lg_alpha: Vec<f64> = self.alpha.iter().map(|&a| ln_gamma(a)).collect();
        for (d, doc) in self.docs.iter().enumerate() {
            ll += ln_gamma(alpha_sum) - ln_gamma(doc.len() as f64 + alpha_sum);
            for t in 0..k {
                let n = self.doc_topic[d * k + t];
                if n > 0 {
                    ll += ln_gamma(n as f64 + self.alpha[t]) - lg_alpha[t];
                }
            }
        }
        ll
    }

    fn into_model(
        self,
        params: ModelParams,
        vocab: Vocabulary,
        doc_ids: Vec<String>,
        dropped_tokens: usize,
    ) -> TopicModel {
        let counts = self.count_tables();
        let (phi, theta) = smoothed_distributions(&counts, &self.alpha, self.beta, self.vocab_size);
        TopicModel {
            beta: self.beta,
            params,
            vocab,
            doc_ids,
            docs: self.docs,
            assignments: self.z,
            alpha: self.alpha,
            dropped_tokens,
            phi,
            theta,
        }
    }
}

/// Trains a model; see [`train_with_observer`].
pub fn train(segments: &[Segment], vocab: &Vocabulary, params: &ModelParams) -> Result<TopicModel, LdaError> {
    train_with_observer(segments, vocab, params, |_, _| {})
}

/// Trains a model, calling `observer(sweep, &sampler)` after every sweep
/// (1-based, after any alpha update of that sweep).
pub fn train_with_observer<F>(
    segments: &[Segment],
    vocab: &Vocabulary,
    params: &ModelParams,
    mut observer: F,
) -> Result<TopicModel, LdaError>
where
    F: FnMut(usize, &GibbsSampler),
{
    params.validate()?;
    if vocab.is_empty() {
        return Err(LdaError::EmptyVocabulary);
    }
    let (docs, dropped) = vocab.encode(segments);
    if dropped > 0 {
        log::warn!("{dropped} out-of-vocabulary tokens dropped");
    }
    let doc_ids = segments.iter().map(|s| s.segment_id.clone()).collect();
    let mut sampler = GibbsSampler::new(docs, vocab.len(), params)?;
    for sweep in 1..=params.iterations {
        sampler.sweep();
        if params.optimizes_after(sweep) {
            sampler.optimize_alpha();
        }
        observer(sweep, &sampler);
    }
    Ok(sampler.into_model(params.clone(), vocab.clone(), doc_ids, dropped))
}
