//! Model files and TSV reports.
//!
//! A model file is UTF-8 text: the header line `tmwr-model v1`, then the
//! sections `[params]`, `[alpha]`, `[vocabulary]`, `[documents]`, `[phi]`,
//! `[theta]`, each holding tab-separated rows, and a closing `[end]` line.
//! Reals are written in shortest round-trip decimal form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{LdaError, ModelParams, TopicModel, Vocabulary};

pub const MODEL_MAGIC: &str = "tmwr-model";
pub const FORMAT_MAJOR: u32 = 1;

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join("\t")
}

pub fn write_model<W: Write>(mut w: W, m: &TopicModel) -> std::io::Result<()> {
    let p = &m.params;
    writeln!(w, "{MODEL_MAGIC} v{FORMAT_MAJOR}")?;
    writeln!(w, "[params]")?;
    writeln!(w, "num_topics\t{}", p.num_topics)?;
    writeln!(w, "iterations\t{}", p.iterations)?;
    writeln!(w, "optimize_interval\t{}", opt(p.optimize_interval))?;
    writeln!(w, "optimize_burn_in\t{}", opt(p.optimize_burn_in))?;
    writeln!(w, "beta_init\t{}", p.beta)?;
    writeln!(w, "alpha_sum_init\t{}", p.alpha_sum)?;
    writeln!(w, "seed\t{}", p.seed)?;
    writeln!(w, "beta\t{}", m.beta)?;
    writeln!(w, "dropped_tokens\t{}", m.dropped_tokens)?;
    writeln!(w, "[alpha]")?;
    for (k, a) in m.alpha.iter().enumerate() {
        writeln!(w, "{k}\t{a}")?;
    }
    writeln!(w, "[vocabulary]")?;
    for id in 0..m.vocab.len() as u32 {
        writeln!(
            w,
            "{id}\t{}\t{}\t{}",
            m.vocab.lemma(id),
            m.vocab.doc_freq(id),
            m.vocab.corpus_freq(id)
        )?;
    }
    writeln!(w, "[documents]")?;
    for ((id, words), zs) in m.doc_ids.iter().zip(&m.docs).zip(&m.assignments) {
        let pairs: Vec<String> = words.iter().zip(zs).map(|(w, z)| format!("{w}:{z}")).collect();
        writeln!(w, "{id}\t{}", pairs.join(" "))?;
    }
    writeln!(w, "[phi]")?;
    for (k, row) in m.phi.iter().enumerate() {
        writeln!(w, "{k}\t{}", join(row))?;
    }
    writeln!(w, "[theta]")?;
    for (id, row) in m.doc_ids.iter().zip(&m.theta) {
        writeln!(w, "{id}\t{}", join(row))?;
    }
    writeln!(w, "[end]")?;
    Ok(())
}

/// Writes to a temporary sibling and renames, so readers never see a
/// partial file.
pub fn save_model(m: &TopicModel, path: &Path) -> Result<(), LdaError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_model(&mut w, m)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TopicModel, LdaError> {
    read_model(BufReader::new(File::open(path)?))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String, LdaError> {
        self.line_no += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(LdaError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("model file truncated at line {}", self.line_no),
            ))),
        }
    }

    fn err(&self, detail: impl Into<String>) -> LdaError {
        LdaError::Format {
            line: self.line_no,
            detail: detail.into(),
        }
    }

    fn expect(&mut self, header: &str) -> Result<(), LdaError> {
        let line = self.next_line()?;
        if line != header {
            return Err(self.err(format!("expected `{header}`, found `{line}`")));
        }
        Ok(())
    }

    fn key_value(&mut self, key: &str) -> Result<String, LdaError> {
        let line = self.next_line()?;
        match line.split_once('\t') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(self.err(format!("expected key `{key}`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, LdaError> {
        s.parse().map_err(|_| self.err(format!("bad {what}: `{s}`")))
    }

    fn parse_opt(&self, s: &str, what: &str) -> Result<Option<usize>, LdaError> {
        if s == "none" {
            Ok(None)
        } else {
            self.parse(s, what).map(Some)
        }
    }

    fn real_row(&mut self, expect_label: Option<&str>, len: usize) -> Result<(String, Vec<f64>), LdaError> {
        let line = self.next_line()?;
        let mut fields = line.split('\t');
        let label = fields.next().unwrap_or_default().to_string();
        if let Some(e) = expect_label {
            if label != e {
                return Err(self.err(format!("expected row `{e}`, found `{label}`")));
            }
        }
        let row = fields
            .map(|f| self.parse::<f64>(f, "real"))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", row.len())));
        }
        Ok((label, row))
    }
}

fn check_header(line: &str) -> Result<(), LdaError> {
    let mismatch = || LdaError::FormatVersionMismatch {
        found: line.to_string(),
    };
    let version = line
        .strip_prefix(MODEL_MAGIC)
        .and_then(|rest| rest.strip_prefix(" v"))
        .ok_or_else(mismatch)?;
    let major: u32 = version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(mismatch)?;
    if major != FORMAT_MAJOR {
        return Err(mismatch());
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: R) -> Result<TopicModel, LdaError> {
    let mut lines = Lines {
        inner: r.lines(),
        line_no: 0,
    };
    let header = match lines.next_line() {
        Ok(h) => h,
        Err(_) => return Err(LdaError::FormatVersionMismatch { found: String::new() }),
    };
    check_header(&header)?;

    lines.expect("[params]")?;
    let num_topics: usize = {
        let v = lines.key_value("num_topics")?;
        lines.parse(&v, "num_topics")?
    };
    let iterations = {
        let v = lines.key_value("iterations")?;
        lines.parse(&v, "iterations")?
    };
    let optimize_interval = {
        let v = lines.key_value("optimize_interval")?;
        lines.parse_opt(&v, "optimize_interval")?
    };
    let optimize_burn_in = {
        let v = lines.key_value("optimize_burn_in")?;
        lines.parse_opt(&v, "optimize_burn_in")?
    };
    let beta_init = {
        let v = lines.key_value("beta_init")?;
        lines.parse(&v, "beta_init")?
    };
    let alpha_sum = {
        let v = lines.key_value("alpha_sum_init")?;
        lines.parse(&v, "alpha_sum_init")?
    };
    let seed = {
        let v = lines.key_value("seed")?;
        lines.parse(&v, "seed")?
    };
    let beta: f64 = {
        let v = lines.key_value("beta")?;
        lines.parse(&v, "beta")?
    };
    let dropped_tokens = {
        let v = lines.key_value("dropped_tokens")?;
        lines.parse(&v, "dropped_tokens")?
    };
    let params = ModelParams {
        num_topics,
        iterations,
        optimize_interval,
        optimize_burn_in,
        beta: beta_init,
        alpha_sum,
        seed,
    };

    lines.expect("[alpha]")?;
    let mut alpha = Vec::with_capacity(num_topics);
    for k in 0..num_topics {
        let (_, row) = lines.real_row(Some(&k.to_string()), 1)?;
        alpha.push(row[0]);
    }

    lines.expect("[vocabulary]")?;
    let (mut lemmas, mut dfs, mut cfs) = (Vec::new(), Vec::new(), Vec::new());
    let mut line = lines.next_line()?;
    while line != "[documents]" {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 || f[0] != lemmas.len().to_string() {
            return Err(lines.err("bad vocabulary row"));
        }
        lemmas.push(f[1].to_string());
        dfs.push(lines.parse(f[2], "doc_freq")?);
        cfs.push(lines.parse(f[3], "corpus_freq")?);
        line = lines.next_line()?;
    }
    let vocab = Vocabulary::from_parts(lemmas, dfs, cfs);
    let v = vocab.len();

    let (mut doc_ids, mut docs, mut assignments) = (Vec::new(), Vec::new(), Vec::new());
    line = lines.next_line()?;
    while line != "[phi]" {
        let (id, rest) = line.split_once('\t').ok_or_else(|| lines.err("bad document row"))?;
        let (mut words, mut zs) = (Vec::new(), Vec::new());
        for pair in rest.split(' ').filter(|p| !p.is_empty()) {
            let (w, z) = pair.split_once(':').ok_or_else(|| lines.err("bad token"))?;
            let w: u32 = lines.parse(w, "word id")?;
            let z: u32 = lines.parse(z, "topic id")?;
            if w as usize >= v || z as usize >= num_topics {
                return Err(lines.err("token id out of range"));
            }
            words.push(w);
            zs.push(z);
        }
        doc_ids.push(id.to_string());
        docs.push(words);
        assignments.push(zs);
        line = lines.next_line()?;
    }

    let mut phi = Vec::with_capacity(num_topics);
    for k in 0..num_topics {
        phi.push(lines.real_row(Some(&k.to_string()), v)?.1);
    }
    lines.expect("[theta]")?;
    let mut theta = Vec::with_capacity(doc_ids.len());
    for id in &doc_ids {
        theta.push(lines.real_row(Some(id), num_topics)?.1);
    }
    lines.expect("[end]")?;

    Ok(TopicModel {
        params,
        vocab,
        doc_ids,
        docs,
        assignments,
        alpha,
        beta,
        dropped_tokens,
        phi,
        theta,
    })
}

/// `rank<TAB>topic_id<TAB>overall_prob<TAB>word:prob ...` in rank order.
pub fn write_topic_report<W: Write>(mut w: W, m: &TopicModel, n_words: usize) -> Result<(), LdaError> {
    let (probs, rank) = m.topic_overall_probabilities();
    writeln!(w, "rank\ttopic_id\toverall_prob\ttop_words")?;
    for (r, &k) in rank.iter().enumerate() {
        let words: Vec<String> = m
            .top_words(k, n_words)?
            .into_iter()
            .map(|(l, p)| format!("{l}:{p:.6}"))
            .collect();
        writeln!(w, "{}\t{k}\t{:.6}\t{}", r + 1, probs[k], words.join(" "))?;
    }
    Ok(())
}

/// `segment_id<TAB>p_0<TAB>...<TAB>p_{K-1}`.
pub fn write_doc_topics<W: Write>(mut w: W, m: &TopicModel) -> std::io::Result<()> {
    let header: Vec<String> = (0..m.num_topics()).map(|k| format!("topic{k}")).collect();
    writeln!(w, "segment_id\t{}", header.join("\t"))?;
    for (id, row) in m.doc_ids.iter().zip(&m.theta) {
        writeln!(w, "{id}\t{}", join(row))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::{build_vocab, train};
    use crate::lingpipe::Segment;

    fn small_model() -> TopicModel {
        let segs: Vec<Segment> = (0..3)
            .map(|i| Segment {
                segment_id: format!("p§{i:02}"),
                play_id: "p".into(),
                seq_index: i,
                section: 1,
                lemmas: "amour coeur sang mort roi amour"
                    .split(' ')
                    .skip(i)
                    .map(String::from)
                    .collect(),
            })
            .collect();
        let vocab = build_vocab(&segs, 1).unwrap();
        let p = ModelParams {
            num_topics: 3,
            iterations: 20,
            optimize_interval: Some(5),
            seed: 5,
            ..ModelParams::default()
        };
        train(&segs, &vocab, &p).unwrap()
    }

    fn to_bytes(m: &TopicModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(&mut buf, m).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small_model();
        let back = read_model(&to_bytes(&m)[..]).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tmwr");
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn truncated_file_never_loads() {
        let bytes = to_bytes(&small_model());
        let text = String::from_utf8(bytes).unwrap();
        let all: Vec<&str> = text.lines().collect();
        for cut in 0..all.len() {
            let partial = all[..cut].join("\n");
            let res = read_model(partial.as_bytes());
            assert!(
                matches!(res, Err(LdaError::Io(_)) | Err(LdaError::FormatVersionMismatch { .. })),
                "cut at {cut}: {res:?}"
            );
        }
    }

    #[test]
    fn newer_major_version_rejected() {
        let text = String::from_utf8(to_bytes(&small_model())).unwrap();
        for header in ["tmwr-model v2", "tmwr-model v10.1", "other-model v1"] {
            let bumped = text.replacen("tmwr-model v1", header, 1);
            assert!(matches!(
                read_model(bumped.as_bytes()),
                Err(LdaError::FormatVersionMismatch { .. })
            ));
        }
        let minor = text.replacen("tmwr-model v1", "tmwr-model v1.3", 1);
        assert!(read_model(minor.as_bytes()).is_ok());
    }

    #[test]
    fn reports_have_expected_shape() {
        let m = small_model();
        let mut buf = Vec::new();
        write_topic_report(&mut buf, &m, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 4);
        assert!(rows[1].starts_with("1\t"));
        assert_eq!(rows[1].split('\t').nth(3).unwrap().split(' ').count(), 2);

        let mut buf = Vec::new();
        write_doc_topics(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap().split('\t').count(), 4);
    }
}
