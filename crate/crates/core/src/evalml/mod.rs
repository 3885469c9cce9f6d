//! Play-level feature matrices, classifiers and cross-validation.

mod classify;
mod cv;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lda::TopicModel;
use crate::num::{is_negligible_spread, Scalar};

pub use classify::{fit, ClassifierKind, ClassifierSpec, DistanceMetric, Fitted};
pub use cv::{baseline_accuracy, cross_validate, fold_assignment, write_cv_report, CvOptions, CvResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("feature matrix shape mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("duplicate row id `{0}`")]
    DuplicateRowId(String),
    #[error("play `{0}` has no segments")]
    PlayWithoutSegments(String),
    #[error("segment `{0}` maps to no known play")]
    UnknownPlay(String),
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("invalid classifier parameters: {0}")]
    InvalidSpec(String),
    #[error("features file line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Plays x features, with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    pub row_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Vec<Vec<T>>,
    pub labels: Vec<String>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(
        row_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<Vec<T>>,
        labels: Vec<String>,
    ) -> Result<Self, EvalError> {
        let m = FeatureMatrix {
            row_ids,
            feature_names,
            values,
            labels,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let n = self.row_ids.len();
        if self.values.len() != n || self.labels.len() != n {
            return Err(EvalError::DimensionMismatch(format!(
                "{n} ids, {} rows, {} labels",
                self.values.len(),
                self.labels.len()
            )));
        }
        let f = self.feature_names.len();
        let mut seen = HashSet::new();
        for (r, row) in self.values.iter().enumerate() {
            if row.len() != f {
                return Err(EvalError::DimensionMismatch(format!(
                    "row {r} has {} values, expected {f}",
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|x| !x.is_finite()) {
                return Err(EvalError::NonFinite { row: r, col: c });
            }
            if !seen.insert(&self.row_ids[r]) {
                return Err(EvalError::DuplicateRowId(self.row_ids[r].clone()));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Distinct labels in lexicographic order; this is the class order used
    /// for all tie-breaking.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    pub fn subset(&self, rows: &[usize]) -> FeatureMatrix<T> {
        FeatureMatrix {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            values: rows.iter().map(|&r| self.values[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
        }
    }
}

/// One row per play: the unweighted mean of its segments' theta rows.
///
/// `segment_play` maps segment ids to play ids; `plays` lists `(play_id,
/// label)` in output row order.
pub fn play_topic_features<T: Scalar>(
    model: &TopicModel,
    segment_play: &HashMap<String, String>,
    plays: &[(String, String)],
) -> Result<FeatureMatrix<T>, EvalError> {
    let k = model.num_topics();
    let index: HashMap<&str, usize> = plays.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let mut sums = vec![vec![0.0f64; k]; plays.len()];
    let mut counts = vec![0usize; plays.len()];
    for (seg_id, theta) in model.doc_ids.iter().zip(&model.theta) {
        let play = segment_play
            .get(seg_id)
            .ok_or_else(|| EvalError::UnknownPlay(seg_id.clone()))?;
        let Some(&row) = index.get(play.as_str()) else {
            return Err(EvalError::UnknownPlay(seg_id.clone()));
        };
        counts[row] += 1;
        for (acc, &p) in sums[row].iter_mut().zip(theta) {
            *acc += p;
        }
    }
    let mut values = Vec::with_capacity(plays.len());
    for (i, (id, _)) in plays.iter().enumerate() {
        if counts[i] == 0 {
            return Err(EvalError::PlayWithoutSegments(id.clone()));
        }
        let n = counts[i] as f64;
        values.push(sums[i].iter().map(|&s| T::lit(s / n)).collect());
    }
    FeatureMatrix::new(
        plays.iter().map(|p| p.0.clone()).collect(),
        (0..k).map(|t| format!("topic{t}")).collect(),
        values,
        plays.iter().map(|p| p.1.clone()).collect(),
    )
}

/// Surface-form token stream of one play.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayTokens {
    pub play_id: String,
    pub label: String,
    pub tokens: Vec<String>,
}

/// Most-frequent-word z-scores.
///
/// The `n_mfw` most frequent forms corpus-wide (ties lexicographic) become
/// columns; each cell is the play's relative frequency standardized across
/// plays with the population standard deviation. Constant columns are zero.
pub fn mfw_zscore_features<T: Scalar>(plays: &[PlayTokens], n_mfw: usize) -> Result<FeatureMatrix<T>, EvalError> {
    if plays.len() < 2 {
        return Err(EvalError::TooFewSamples(format!(
            "z-scores need at least 2 plays, got {}",
            plays.len()
        )));
    }
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for p in plays {
        for t in &p.tokens {
            *totals.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<(&str, usize)> = totals.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    words.truncate(n_mfw);
    let col: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.0, i)).collect();

    let mut rel = vec![vec![T::zero(); words.len()]; plays.len()];
    for (r, p) in plays.iter().enumerate() {
        let mut counts = vec![0usize; words.len()];
        for t in &p.tokens {
            if let Some(&c) = col.get(t.as_str()) {
                counts[c] += 1;
            }
        }
        if !p.tokens.is_empty() {
            let len = p.tokens.len() as f64;
            for (c, &n) in counts.iter().enumerate() {
                rel[r][c] = T::lit(n as f64 / len);
            }
        }
    }
    zscore_columns(&mut rel);
    FeatureMatrix::new(
        plays.iter().map(|p| p.play_id.clone()).collect(),
        words.iter().map(|w| w.0.to_string()).collect(),
        rel,
        plays.iter().map(|p| p.label.clone()).collect(),
    )
}

/// Standardizes each column in place (population std); constant columns
/// become zero.
pub fn zscore_columns<T: Scalar>(rows: &mut [Vec<T>]) {
    let Some(width) = rows.first().map(Vec::len) else {
        return;
    };
    let n = T::from_usize_lossy(rows.len());
    for c in 0..width {
        let mean = rows.iter().map(|r| r[c]).sum::<T>() / n;
        let var = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<T>() / n;
        let std = var.sqrt();
        let constant = is_negligible_spread(std, mean);
        for r in rows.iter_mut() {
            r[c] = if constant { T::zero() } else { (r[c] - mean) / std };
        }
    }
}

/// TSV: `play_id`, feature columns, `label`; header row with feature names.
pub fn write_features<T: Scalar, W: Write>(mut w: W, m: &FeatureMatrix<T>) -> std::io::Result<()> {
    writeln!(w, "play_id\t{}\tlabel", m.feature_names.join("\t"))?;
    for ((id, row), label) in m.row_ids.iter().zip(&m.values).zip(&m.labels) {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{id}\t{}\t{label}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn read_features<T: Scalar + std::str::FromStr, R: BufRead>(r: R) -> Result<FeatureMatrix<T>, EvalError> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 || cols[0] != "play_id" || cols[cols.len() - 1] != "label" {
        return Err(EvalError::BadLine {
            line: 1,
            detail: "header must be play_id ... label".into(),
        });
    }
    let feature_names: Vec<String> = cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let (mut ids, mut values, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |d: &str| EvalError::BadLine {
            line: i + 2,
            detail: d.into(),
        };
        if f.len() != cols.len() {
            return Err(bad("wrong field count"));
        }
        ids.push(f[0].to_string());
        labels.push(f[f.len() - 1].to_string());
        values.push(
            f[1..f.len() - 1]
                .iter()
                .map(|s| s.parse::<T>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<T>, _>>()?,
        );
    }
    FeatureMatrix::new(ids, feature_names, values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::{build_vocab, train, ModelParams};
    use crate::lingpipe::Segment;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn play(id: &str, text: &str) -> PlayTokens {
        PlayTokens {
            play_id: id.into(),
            label: "x".into(),
            tokens: toks(text),
        }
    }

    #[test]
    fn identical_texts_give_zero_matrix() {
        let plays = vec![play("a", "le roi le coeur"), play("b", "le roi le coeur")];
        let m: FeatureMatrix<f64> = mfw_zscore_features(&plays, 10).unwrap();
        assert!(m.values.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(m.feature_names, vec!["le", "coeur", "roi"]);
    }

    #[test]
    fn two_play_worked_example() {
        // "a" has relative frequency 0.1 in p1 and 0.3 in p2.
        let p1 = format!("a {}", "x ".repeat(9));
        let p2 = format!("a a a {}", "y ".repeat(7));
        let m: FeatureMatrix<f64> = mfw_zscore_features(&[play("p1", &p1), play("p2", &p2)], 3).unwrap();
        let col = m.feature_names.iter().position(|w| w == "a").unwrap();
        assert!((m.values[0][col] + 1.0).abs() < 1e-12);
        assert!((m.values[1][col] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mfw_truncation_and_ties() {
        let plays = vec![play("a", "b a c"), play("b", "c")];
        let m: FeatureMatrix<f64> = mfw_zscore_features(&plays, 100).unwrap();
        assert_eq!(m.feature_names, vec!["c", "a", "b"]);
        let m: FeatureMatrix<f32> = mfw_zscore_features(&plays, 1).unwrap();
        assert_eq!(m.feature_names, vec!["c"]);
        assert!(mfw_zscore_features::<f64>(&plays[..1], 5).is_err());
    }

    proptest! {
        #[test]
        fn zscore_columns_are_standardized(
            texts in proptest::collection::vec(proptest::collection::vec(0usize..8, 1..60), 2..12)
        ) {
            let plays: Vec<PlayTokens> = texts.iter().enumerate().map(|(i, t)| PlayTokens {
                play_id: format!("p{i}"),
                label: "x".into(),
                tokens: t.iter().map(|w| format!("w{w}")).collect(),
            }).collect();
            let m: FeatureMatrix<f64> = mfw_zscore_features(&plays, 5).unwrap();
            let n = m.n_rows() as f64;
            for c in 0..m.n_features() {
                let col: Vec<f64> = m.values.iter().map(|r| r[c]).collect();
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!(col.iter().all(|&x| x == 0.0) || (var.sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    fn segment(id: &str, play: &str, words: &str) -> Segment {
        Segment {
            segment_id: id.into(),
            play_id: play.into(),
            seq_index: 0,
            section: 1,
            lemmas: toks(words),
        }
    }

    #[test]
    fn topic_features_average_segments() {
        let segs = vec![
            segment("a0", "a", "x y x y"),
            segment("a1", "a", "z w z"),
            segment("b0", "b", "x z"),
        ];
        let vocab = build_vocab(&segs, 1).unwrap();
        let mut model = train(
            &segs,
            &vocab,
            &ModelParams {
                num_topics: 2,
                iterations: 5,
                ..ModelParams::default()
            },
        )
        .unwrap();
        model.theta = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.3, 0.7]];
        let map: HashMap<String, String> = segs.iter().map(|s| (s.segment_id.clone(), s.play_id.clone())).collect();
        let plays = vec![("a".to_string(), "comedy".to_string()), ("b".into(), "tragedy".into())];
        let m: FeatureMatrix<f64> = play_topic_features(&model, &map, &plays).unwrap();
        assert_eq!(m.values, vec![vec![0.5, 0.5], vec![0.3, 0.7]]);
        for row in &m.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let extra = vec![plays[0].clone(), plays[1].clone(), ("c".into(), "x".into())];
        assert!(matches!(
            play_topic_features::<f64>(&model, &map, &extra),
            Err(EvalError::PlayWithoutSegments(p)) if p == "c"
        ));
        assert!(matches!(
            play_topic_features::<f64>(&model, &map, &plays[..1]),
            Err(EvalError::UnknownPlay(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let ids = vec!["a".to_string(), "a".to_string()];
        let r = FeatureMatrix::new(
            ids,
            vec!["f".into()],
            vec![vec![1.0], vec![2.0]],
            vec!["x".into(), "y".into()],
        );
        assert!(matches!(r, Err(EvalError::DuplicateRowId(_))));
        let r = FeatureMatrix::new(
            vec!["a".into()],
            vec!["f".into()],
            vec![vec![f64::NAN]],
            vec!["x".into()],
        );
        assert!(matches!(r, Err(EvalError::NonFinite { .. })));
        let r = FeatureMatrix::<f64>::new(vec!["a".into()], vec!["f".into()], vec![vec![]], vec!["x".into()]);
        assert!(matches!(r, Err(EvalError::DimensionMismatch(_))));
    }

    #[test]
    fn features_file_round_trip() {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["f1".into(), "f2".into()],
            vec![vec![0.1, -2.5], vec![1e-12, 3.0]],
            vec!["comedy".into(), "tragedy".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &m).unwrap();
        let back: FeatureMatrix<f64> = read_features(&buf[..]).unwrap();
        assert_eq!(back, m);
    }
}
