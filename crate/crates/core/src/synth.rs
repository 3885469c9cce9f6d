//! Synthetic corpora with planted genre topics, for tests and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lingpipe::{section_of, segment_id, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub genres: Vec<String>,
    pub plays_per_genre: usize,
    pub segments_per_play: usize,
    pub segment_len: usize,
    /// Vocabulary size of each genre's planted topic.
    pub words_per_topic: usize,
    /// Size of the genre-neutral background vocabulary.
    pub shared_words: usize,
    /// Probability that a token comes from the play's genre topic rather
    /// than the background.
    pub purity: f64,
    /// When positive, a "late" topic whose share grows linearly from 0 in
    /// the first section to this value in the fifth.
    pub late_topic_share: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            genres: vec!["comedy".into(), "tragedy".into(), "tragicomedy".into()],
            plays_per_genre: 10,
            segments_per_play: 10,
            segment_len: 60,
            words_per_topic: 12,
            shared_words: 20,
            purity: 0.7,
            late_topic_share: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub segments: Vec<Segment>,
    /// `(play_id, genre)` in generation order.
    pub plays: Vec<(String, String)>,
}

pub fn genre_word(genre: usize, j: usize) -> String {
    format!("g{genre}w{j:02}")
}

pub fn late_word(j: usize) -> String {
    format!("late{j:02}")
}

pub fn synthetic_corpus(spec: &SynthSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut segments = Vec::new();
    let mut plays = Vec::new();
    for p in 0..spec.plays_per_genre {
        for (g, genre) in spec.genres.iter().enumerate() {
            let play_id = format!("{genre}{p:03}");
            for s in 0..spec.segments_per_play {
                let section = section_of(s, spec.segments_per_play);
                let late = spec.late_topic_share * f64::from(section - 1) / 4.0;
                let lemmas = (0..spec.segment_len)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        if u < late {
                            late_word(rng.gen_range(0..spec.words_per_topic))
                        } else if u < late + (1.0 - late) * spec.purity {
                            genre_word(g, rng.gen_range(0..spec.words_per_topic))
                        } else {
                            format!("bg{:02}", rng.gen_range(0..spec.shared_words.max(1)))
                        }
                    })
                    .collect();
                segments.push(Segment {
                    segment_id: segment_id(&play_id, s),
                    play_id: play_id.clone(),
                    seq_index: s,
                    section,
                    lemmas,
                });
            }
            plays.push((play_id, genre.clone()));
        }
    }
    SynthCorpus { segments, plays }
}

/// Documents mixing planted topics with disjoint vocabularies.
///
/// Document `d` draws 75% of its tokens from topic `d mod topics` and the
/// rest from one other randomly chosen topic; words are uniform within a
/// topic. Returns the documents and each topic's word list.
pub fn planted_topic_documents(
    docs: usize,
    topics: usize,
    words_per_topic: usize,
    doc_len: usize,
    seed: u64,
) -> (Vec<Segment>, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<Vec<String>> = (0..topics)
        .map(|t| (0..words_per_topic).map(|j| format!("t{t}w{j:02}")).collect())
        .collect();
    let segments = (0..docs)
        .map(|d| {
            let main = d % topics;
            let other = if topics > 1 {
                (main + 1 + rng.gen_range(0..topics - 1)) % topics
            } else {
                main
            };
            let lemmas = (0..doc_len)
                .map(|_| {
                    let t = if rng.gen_bool(0.75) { main } else { other };
                    vocab[t][rng.gen_range(0..words_per_topic)].clone()
                })
                .collect();
            let play_id = format!("doc{d:03}");
            Segment {
                segment_id: segment_id(&play_id, 0),
                play_id,
                seq_index: 0,
                section: 1,
                lemmas,
            }
        })
        .collect();
    (segments, vocab)
}
