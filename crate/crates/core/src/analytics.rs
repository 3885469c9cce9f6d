//! Genre-level topic statistics: genre means and their spread, per-section
//! score distributions, rank tests between sections, topic similarity.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::lingpipe::Segment;
use crate::num::{is_negligible_spread, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("play `{0}` has no genre")]
    MissingGenre(String),
    #[error("genre `{0}` has no segments")]
    EmptyGenre(String),
    #[error("topic {0} out of range")]
    BadTopic(usize),
    #[error("theta has {theta} rows for {segments} segments")]
    LengthMismatch { theta: usize, segments: usize },
    #[error("empty sample")]
    EmptySample,
}

/// Where a segment sits: its play, that play's genre and its section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentInfo {
    pub play_id: String,
    pub genre: String,
    pub section: u8,
}

pub fn segment_info(
    segments: &[Segment],
    play_genre: &HashMap<String, String>,
) -> Result<Vec<SegmentInfo>, AnalyticsError> {
    segments
        .iter()
        .map(|s| {
            let genre = play_genre
                .get(&s.play_id)
                .ok_or_else(|| AnalyticsError::MissingGenre(s.play_id.clone()))?;
            Ok(SegmentInfo {
                play_id: s.play_id.clone(),
                genre: genre.clone(),
                section: s.section,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreTopicTable<T> {
    pub genres: Vec<String>,
    /// G x K mean segment-level topic score.
    pub means: Vec<Vec<T>>,
    /// Per topic: population standard deviation of the genre means.
    pub stds_across_genres: Vec<T>,
    /// G x K z-scores of each topic's genre means; zero for topics that
    /// are constant across genres.
    pub row_normalized: Vec<Vec<T>>,
}

impl<T: Scalar> GenreTopicTable<T> {
    pub fn num_topics(&self) -> usize {
        self.stds_across_genres.len()
    }
}

/// Segment-level genre means. Segments whose genre is not listed in
/// `genre_order` are left out; an empty `genre_order` means every genre
/// present, sorted.
pub fn genre_topic_table<T: Scalar>(
    theta: &[Vec<T>],
    info: &[SegmentInfo],
    genre_order: &[String],
) -> Result<GenreTopicTable<T>, AnalyticsError> {
    if theta.len() != info.len() {
        return Err(AnalyticsError::LengthMismatch {
            theta: theta.len(),
            segments: info.len(),
        });
    }
    let genres: Vec<String> = if genre_order.is_empty() {
        let mut g: Vec<String> = info.iter().map(|i| i.genre.clone()).collect();
        g.sort();
        g.dedup();
        g
    } else {
        genre_order.to_vec()
    };
    let k = theta.first().map_or(0, Vec::len);
    let index: HashMap<&str, usize> = genres.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut sums = vec![vec![T::zero(); k]; genres.len()];
    let mut counts = vec![0usize; genres.len()];
    for (row, i) in theta.iter().zip(info) {
        if let Some(&g) = index.get(i.genre.as_str()) {
            counts[g] += 1;
            for (acc, &p) in sums[g].iter_mut().zip(row) {
                *acc += p;
            }
        }
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(AnalyticsError::EmptyGenre(genres[g].clone()));
    }
    let means: Vec<Vec<T>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &c)| {
            let n = T::from_usize_lossy(c);
            row.into_iter().map(|s| s / n).collect()
        })
        .collect();
    let g = T::from_usize_lossy(genres.len());
    let mut stds = vec![T::zero(); k];
    let mut z = vec![vec![T::zero(); k]; genres.len()];
    for t in 0..k {
        let mean = means.iter().map(|r| r[t]).sum::<T>() / g;
        let var = means.iter().map(|r| (r[t] - mean) * (r[t] - mean)).sum::<T>() / g;
        let std = var.sqrt();
        if is_negligible_spread(std, mean) {
            continue;
        }
        stds[t] = std;
        for (zr, mr) in z.iter_mut().zip(&means) {
            zr[t] = (mr[t] - mean) / std;
        }
    }
    Ok(GenreTopicTable {
        genres,
        means,
        stds_across_genres: stds,
        row_normalized: z,
    })
}

/// Topic ids by decreasing spread across genres, ties by id; first `n`.
pub fn top_distinctive<T: Scalar>(table: &GenreTopicTable<T>, n: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..table.num_topics()).collect();
    ids.sort_by(|&a, &b| {
        table.stds_across_genres[b]
            .partial_cmp(&table.stds_across_genres[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    ids.truncate(n);
    ids
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + T::lit(h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats<T> {
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    /// Most extreme values still inside the 1.5 x IQR fences.
    pub whisker_low: T,
    pub whisker_high: T,
    pub outliers: Vec<T>,
}

pub fn box_stats<T: Scalar>(values: &[T]) -> Option<BoxStats<T>> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let q1 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let fence = T::lit(1.5) * (q3 - q1);
    let (lo, hi) = (q1 - fence, q3 + fence);
    let inside: Vec<T> = v.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    Some(BoxStats {
        min: v[0],
        q1,
        median,
        q3,
        max: v[v.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.into_iter().filter(|&x| x < lo || x > hi).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionStats<T> {
    pub section: u8,
    pub n: usize,
    /// `None` when the section has no segments.
    pub stats: Option<BoxStats<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDistribution<T> {
    pub topic: usize,
    pub genre: String,
    /// Sections 1 to 5, in order.
    pub sections: Vec<SectionStats<T>>,
}

/// Scores of `topic` over the segments of `genre`, grouped by section.
pub fn section_values<T: Scalar>(
    theta: &[Vec<T>],
    info: &[SegmentInfo],
    topic: usize,
    genre: &str,
) -> Result<[Vec<T>; 5], AnalyticsError> {
    if theta.len() != info.len() {
        return Err(AnalyticsError::LengthMismatch {
            theta: theta.len(),
            segments: info.len(),
        });
    }
    let mut out: [Vec<T>; 5] = Default::default();
    for (row, i) in theta.iter().zip(info) {
        if i.genre != genre {
            continue;
        }
        let &v = row.get(topic).ok_or(AnalyticsError::BadTopic(topic))?;
        out[usize::from(i.section.clamp(1, 5)) - 1].push(v);
    }
    Ok(out)
}

pub fn section_distribution<T: Scalar>(
    theta: &[Vec<T>],
    info: &[SegmentInfo],
    topic: usize,
    genre: &str,
) -> Result<SectionDistribution<T>, AnalyticsError> {
    if theta.first().is_some_and(|r| topic >= r.len()) {
        return Err(AnalyticsError::BadTopic(topic));
    }
    let values = section_values(theta, info, topic, genre)?;
    if values.iter().all(Vec::is_empty) {
        return Err(AnalyticsError::EmptyGenre(genre.to_string()));
    }
    let sections = values
        .iter()
        .enumerate()
        .map(|(s, v)| {
            if v.is_empty() {
                log::warn!("genre {genre}: section {} has no segments", s + 1);
            }
            SectionStats {
                section: s as u8 + 1,
                n: v.len(),
                stats: box_stats(v),
            }
        })
        .collect();
    Ok(SectionDistribution {
        topic,
        genre: genre.to_string(),
        sections,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled values, and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

pub const EXACT_LIMIT: usize = 8;

/// Two-sided Mann-Whitney U test. Exact permutation distribution of the
/// midrank sum when both samples have at most 8 values; otherwise the
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney, AnalyticsError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    if a.len() <= EXACT_LIMIT && b.len() <= EXACT_LIMIT {
        Ok(mann_whitney_exact(a, b))
    } else {
        Ok(mann_whitney_normal(a, b))
    }
}

fn rank_sum(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    (ranks[..a.len()].iter().sum(), ranks, ties)
}

pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> MannWhitney {
    let (na, n) = (a.len(), a.len() + b.len());
    assert!(n <= 24, "exact enumeration limited to small samples");
    let (w, ranks, _) = rank_sum(a, b);
    let expected = na as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (w - expected).abs() - 1e-9;
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (s - expected).abs() >= observed {
            extreme += 1;
        }
    }
    MannWhitney {
        u: w - (na * (na + 1)) as f64 / 2.0,
        p_value: extreme as f64 / total as f64,
        exact: true,
    }
}

pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> MannWhitney {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let (w, _, ties) = rank_sum(a, b);
    let u = w - na * (na + 1.0) / 2.0;
    let mu = na * nb / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term);
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    MannWhitney {
        u,
        p_value,
        exact: false,
    }
}

/// Cosine similarity between phi rows. The diagonal is exactly 1; rows
/// with zero norm have similarity 0 to every other row.
pub fn topic_cosine_similarity<T: Scalar>(phi: &[Vec<T>]) -> Vec<Vec<T>> {
    let norms: Vec<T> = phi.iter().map(|r| r.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    let k = phi.len();
    let mut out = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        out[i][i] = T::one();
        for j in i + 1..k {
            let denom = norms[i] * norms[j];
            let s = if denom > T::zero() {
                let dot: T = phi[i].iter().zip(&phi[j]).map(|(&x, &y)| x * y).sum();
                (dot / denom).min(T::one())
            } else {
                T::zero()
            };
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    out
}

/// Topics in the given order as rows, genres as columns, z-scores as cells.
pub fn write_heatmap<T: Scalar, W: Write>(
    mut w: W,
    table: &GenreTopicTable<T>,
    topics: &[usize],
    labels: &[String],
) -> std::io::Result<()> {
    writeln!(w, "topic\tlabel\t{}", table.genres.join("\t"))?;
    for &t in topics {
        let cells: Vec<String> = table.row_normalized.iter().map(|r| format!("{:.6}", r[t])).collect();
        let label = labels.get(t).map_or("", String::as_str);
        writeln!(w, "{t}\t{label}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

/// Raw genre means, one row per topic, plus the spread column.
pub fn write_genre_means<T: Scalar, W: Write>(mut w: W, table: &GenreTopicTable<T>) -> std::io::Result<()> {
    writeln!(w, "topic\t{}\tstd", table.genres.join("\t"))?;
    for t in 0..table.num_topics() {
        let cells: Vec<String> = table.means.iter().map(|r| format!("{:.6}", r[t])).collect();
        writeln!(w, "{t}\t{}\t{:.6}", cells.join("\t"), table.stds_across_genres[t])?;
    }
    Ok(())
}

pub fn write_boxplot_data<T: Scalar, W: Write>(mut w: W, dists: &[SectionDistribution<T>]) -> std::io::Result<()> {
    writeln!(w, "topic\tgenre\tsection\tn\tmin\tq1\tmedian\tq3\tmax\toutliers")?;
    for d in dists {
        for s in &d.sections {
            match &s.stats {
                Some(b) => {
                    let out: Vec<String> = b.outliers.iter().map(|x| format!("{x:.6}")).collect();
                    writeln!(
                        w,
                        "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                        d.topic,
                        d.genre,
                        s.section,
                        s.n,
                        b.min,
                        b.q1,
                        b.median,
                        b.q3,
                        b.max,
                        out.join(";")
                    )?;
                }
                None => writeln!(w, "{}\t{}\t{}\t0\tNA\tNA\tNA\tNA\tNA\t", d.topic, d.genre, s.section)?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn info(genre: &str, section: u8) -> SegmentInfo {
        SegmentInfo {
            play_id: "p".into(),
            genre: genre.into(),
            section,
        }
    }

    #[test]
    fn single_genre_has_no_spread() {
        let theta: Vec<Vec<f64>> = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
        let t = genre_topic_table(&theta, &[info("a", 1), info("a", 2)], &[]).unwrap();
        assert!((t.means[0][0] - 0.4).abs() < 1e-12 && (t.means[0][1] - 0.6).abs() < 1e-12);
        assert_eq!(t.stds_across_genres, vec![0.0, 0.0]);
        assert_eq!(t.row_normalized, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn two_genre_hand_computation() {
        let theta: Vec<Vec<f64>> = vec![vec![0.2, 0.8], vec![0.4, 0.6]];
        let order = vec!["comedy".to_string(), "tragedy".to_string()];
        let t = genre_topic_table(&theta, &[info("comedy", 1), info("tragedy", 1)], &order).unwrap();
        assert!((t.stds_across_genres[0] - 0.1).abs() < 1e-12);
        assert!((t.row_normalized[0][0] + 1.0).abs() < 1e-12);
        assert!((t.row_normalized[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_genre_is_an_error() {
        let theta = vec![vec![1.0]];
        let order = vec!["a".to_string(), "b".to_string()];
        assert_eq!(
            genre_topic_table(&theta, &[info("a", 1)], &order),
            Err(AnalyticsError::EmptyGenre("b".into()))
        );
    }

    #[test]
    fn planted_topic_ranks_first() {
        // Topic 2 is doubled in genre "c"; topics 0 and 1 are constant.
        let theta = vec![vec![0.4, 0.4, 0.2], vec![0.4, 0.4, 0.2], vec![0.3, 0.3, 0.4]];
        let inf = [info("a", 1), info("b", 1), info("c", 1)];
        let t = genre_topic_table(&theta, &inf, &[]).unwrap();
        let top = top_distinctive(&t, 3);
        assert_eq!(top[0], 2);
        let mut all = top.clone();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert_eq!(top_distinctive(&t, 1), vec![2]);
    }

    #[test]
    fn constant_topics_sort_last_in_id_order() {
        let t = GenreTopicTable {
            genres: vec!["a".into()],
            means: vec![vec![0.25; 4]],
            stds_across_genres: vec![0.0, 0.3, 0.0, 0.1],
            row_normalized: vec![vec![0.0; 4]],
        };
        assert_eq!(top_distinctive(&t, 4), vec![1, 3, 0, 2]);
    }

    #[test]
    fn quartiles_and_outliers_by_hand() {
        let b = box_stats::<f64>(&[0.0, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!((b.q1, b.median), (0.0, 0.0));
        assert!((b.q3 - 0.125).abs() < 1e-15);
        assert_eq!(b.outliers, vec![0.5]);
        assert_eq!(b.whisker_high, 0.0);
        let b = box_stats(&[0.3f32; 5]).unwrap();
        assert!(b.q1 == b.median && b.median == b.q3 && b.outliers.is_empty());
        assert!(box_stats::<f64>(&[]).is_none());
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn section_distribution_reports_empty_sections() {
        let theta = vec![vec![0.1], vec![0.2], vec![0.9]];
        let inf = [info("t", 1), info("t", 1), info("c", 5)];
        let d = section_distribution(&theta, &inf, 0, "t").unwrap();
        assert_eq!(d.sections.len(), 5);
        assert_eq!(d.sections[0].n, 2);
        assert!(d.sections[1..].iter().all(|s| s.n == 0 && s.stats.is_none()));
        assert!(matches!(
            section_distribution(&theta, &inf, 3, "t"),
            Err(AnalyticsError::BadTopic(3))
        ));
        assert!(matches!(
            section_distribution(&theta, &inf, 0, "x"),
            Err(AnalyticsError::EmptyGenre(_))
        ));
    }

    #[test]
    fn exact_test_on_fully_separated_triples() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[101.0, 102.0, 103.0]).unwrap();
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        assert_eq!(r.u, 0.0);
    }

    #[test]
    fn identical_samples_show_no_shift() {
        let a = [0.1, 0.4, 0.4, 0.9];
        assert_eq!(mann_whitney(&a, &a).unwrap().p_value, 1.0);
        let big: Vec<f64> = (0..20).map(|i| f64::from(i % 7)).collect();
        let r = mann_whitney(&big, &big).unwrap();
        assert!(!r.exact && r.p_value > 0.99);
        assert_eq!(mann_whitney(&[], &a), Err(AnalyticsError::EmptySample));
    }

    #[test]
    fn all_tied_values_give_p_one() {
        let r = mann_whitney_normal(&[0.0; 10], &[0.0; 12]);
        assert_eq!(r.p_value, 1.0);
    }

    proptest! {
        #[test]
        fn normal_approximation_tracks_exact(
            a in proptest::collection::vec(0.0f64..10.0, 8),
            b in proptest::collection::vec(0.0f64..10.0, 8),
        ) {
            let e = mann_whitney_exact(&a, &b).p_value;
            let n = mann_whitney_normal(&a, &b).p_value;
            prop_assert!((e - n).abs() < 0.05, "exact {e} normal {n}");
        }

        #[test]
        fn p_values_are_symmetric_and_in_range(
            a in proptest::collection::vec(0u8..5, 1..12),
            b in proptest::collection::vec(0u8..5, 1..12),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney(&a, &b).unwrap().p_value;
            let ba = mann_whitney(&b, &a).unwrap().p_value;
            prop_assert!(ab > 0.0 && ab <= 1.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn genre_means_stay_stochastic(
            rows in proptest::collection::vec((proptest::collection::vec(0.01f64..1.0, 4), 0usize..3, 1u8..6), 3..40)
        ) {
            let theta: Vec<Vec<f64>> = rows.iter().map(|(r, _, _)| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            }).collect();
            let genres = ["a", "b", "c"];
            let inf: Vec<SegmentInfo> = rows.iter().map(|(_, g, s)| info(genres[*g], *s)).collect();
            let t = genre_topic_table(&theta, &inf, &[]).unwrap();
            for m in &t.means {
                prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
            for k in 0..4 {
                let col: f64 = t.row_normalized.iter().map(|r| r[k]).sum();
                prop_assert!(col.abs() < 1e-9);
            }
            for g in &t.genres {
                let d = section_distribution(&theta, &inf, 0, g).unwrap();
                let n: usize = d.sections.iter().map(|s| s.n).sum();
                prop_assert_eq!(n, inf.iter().filter(|i| &i.genre == g).count());
                for s in d.sections.iter().filter_map(|s| s.stats.as_ref()) {
                    prop_assert!(s.q1 <= s.median && s.median <= s.q3);
                }
            }
        }
    }

    #[test]
    fn cosine_cases() {
        let phi: Vec<Vec<f64>> = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.0, 1.0],
            vec![0.5, 0.5, 0.0],
        ];
        let s = topic_cosine_similarity(&phi);
        assert!((s[0][1] - 0.5).abs() < 1e-12);
        assert_eq!(s[0][2], 0.0);
        assert!((s[0][3] - 1.0).abs() < 1e-12);
        for i in 0..4 {
            assert_eq!(s[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(s[i][j], s[j][i]);
            }
        }
    }

    #[test]
    fn data_files_have_expected_shape() {
        let theta = vec![vec![0.2, 0.8], vec![0.4, 0.6]];
        let inf = [info("comedy", 1), info("tragedy", 2)];
        let t = genre_topic_table(&theta, &inf, &[]).unwrap();
        let mut buf = Vec::new();
        write_heatmap(&mut buf, &t, &[1, 0], &["x".into(), "y".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "topic\tlabel\tcomedy\ttragedy");
        assert!(text.lines().nth(1).unwrap().starts_with("1\ty\t1.000000"));
        let d = section_distribution(&theta, &inf, 0, "comedy").unwrap();
        let mut buf = Vec::new();
        write_boxplot_data(&mut buf, &[d]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }
}
