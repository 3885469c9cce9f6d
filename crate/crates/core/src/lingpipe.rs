//! From extracted play text to content-word lemma segments.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LingError {
    #[error("line {0}: expected three tab-separated fields")]
    BadLine(usize),
    #[error("line {line}: {detail}")]
    BadSegmentLine { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const UNKNOWN_POS: &str = "UNK";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub pos: String,
    pub lemma: String,
}

impl Token {
    /// Empty lemma falls back to the form, empty pos to `UNK`.
    pub fn new(form: impl Into<String>, pos: impl Into<String>, lemma: impl Into<String>) -> Self {
        let form = form.into();
        let mut pos = pos.into();
        let mut lemma = lemma.into();
        if pos.is_empty() {
            pos = UNKNOWN_POS.to_string();
        }
        if lemma.is_empty() {
            lemma = form.clone();
        }
        Token { form, pos, lemma }
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits text into word forms.
///
/// Letters and digits form words; everything else separates them. An
/// apostrophe directly after a word ends it and stays on it, so elided
/// clitics come out as `l'`, `qu'`, `d'`.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if is_apostrophe(c) && !cur.is_empty() {
            cur.push('\'');
            out.push(std::mem::take(&mut cur));
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    if lowercase {
        for t in &mut out {
            *t = t.to_lowercase();
        }
    }
    out
}

/// Reads tagger output in vertical format: `form<TAB>pos<TAB>lemma` per line.
/// Blank lines are skipped; a lemma of `<unknown>` is replaced by the form.
pub fn read_tagged_vertical(bytes: &[u8]) -> Result<Vec<Token>, LingError> {
    let text = String::from_utf8_lossy(bytes);
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(LingError::BadLine(i + 1));
        }
        let lemma = if fields[2] == "<unknown>" { fields[0] } else { fields[2] };
        tokens.push(Token::new(fields[0], fields[1], lemma));
    }
    Ok(tokens)
}

/// Lemma lookup table keyed by lowercased form.
///
/// Lookup falls back from the exact `(form, pos)` pair to the first entry
/// seen for the form, and finally to the form itself tagged `UNK`.
#[derive(Debug, Clone, Default)]
pub struct LemmaLexicon {
    entries: HashMap<(String, String), String>,
    by_form: HashMap<String, (String, String)>,
}

impl LemmaLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, form: &str, pos: &str, lemma: &str) {
        let form = form.to_lowercase();
        let lemma = if lemma.is_empty() || lemma == "<unknown>" {
            form.clone()
        } else {
            lemma.to_lowercase()
        };
        self.by_form
            .entry(form.clone())
            .or_insert_with(|| (pos.to_string(), lemma.clone()));
        self.entries.insert((form, pos.to_string()), lemma);
    }

    /// Parses `form<TAB>pos<TAB>lemma` lines; `#` lines are comments.
    pub fn from_tsv(bytes: &[u8]) -> Result<Self, LingError> {
        let text = String::from_utf8_lossy(bytes);
        let mut lex = LemmaLexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(LingError::BadLine(i + 1));
            }
            lex.insert(f[0], f[1], f[2]);
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, form: &str, pos: Option<&str>) -> Token {
        let key = form.to_lowercase();
        if let Some(pos) = pos {
            if let Some(lemma) = self.entries.get(&(key.clone(), pos.to_string())) {
                return Token::new(form, pos, lemma.as_str());
            }
        }
        match self.by_form.get(&key) {
            Some((pos, lemma)) => Token::new(form, pos.as_str(), lemma.as_str()),
            None => Token::new(form, UNKNOWN_POS, form),
        }
    }
}

pub fn lemmatize(forms: &[String], lexicon: &LemmaLexicon) -> Vec<Token> {
    forms.iter().map(|f| lexicon.lookup(f, None)).collect()
}

/// Reads a one-lemma-per-line list (stoplist, name list).
pub fn read_word_list(bytes: &[u8]) -> HashSet<String> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Keeps content-word lemmas.
#[derive(Debug, Clone)]
pub struct ContentFilter {
    /// A tag matches an entry when equal to it or when its part before `:`
    /// equals it (`VER:impf` matches `VER`).
    pub pos_whitelist: BTreeSet<String>,
    pub stoplist: HashSet<String>,
    pub name_list: HashSet<String>,
    /// Tags starting with any of these are treated as proper names.
    pub name_pos_prefixes: Vec<String>,
}

impl Default for ContentFilter {
    fn default() -> Self {
        ContentFilter {
            pos_whitelist: ["NOM", "VER", "ADJ"].iter().map(|s| s.to_string()).collect(),
            stoplist: HashSet::new(),
            name_list: HashSet::new(),
            name_pos_prefixes: vec!["NAM".into(), "NP".into()],
        }
    }
}

impl ContentFilter {
    fn pos_allowed(&self, pos: &str) -> bool {
        if self.name_pos_prefixes.iter().any(|p| pos.starts_with(p.as_str())) {
            return false;
        }
        let major = pos.split(':').next().unwrap_or(pos);
        self.pos_whitelist.contains(pos) || self.pos_whitelist.contains(major)
    }

    pub fn apply(&self, tokens: &[Token]) -> Vec<String> {
        tokens
            .iter()
            .filter(|t| {
                self.pos_allowed(&t.pos) && !self.stoplist.contains(&t.lemma) && !self.name_list.contains(&t.lemma)
            })
            .map(|t| t.lemma.clone())
            .collect()
    }
}

pub fn content_filter(
    tokens: &[Token],
    pos_whitelist: &BTreeSet<String>,
    stoplist: &HashSet<String>,
    name_list: &HashSet<String>,
) -> Vec<String> {
    ContentFilter {
        pos_whitelist: pos_whitelist.clone(),
        stoplist: stoplist.clone(),
        name_list: name_list.clone(),
        ..ContentFilter::default()
    }
    .apply(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub play_id: String,
    pub seq_index: usize,
    /// Play section, 1 to 5.
    pub section: u8,
    pub lemmas: Vec<String>,
}

/// Splits a lemma sequence into windows of `target_len`.
///
/// A trailing remainder shorter than half the target is merged into the
/// previous window when there is one.
pub fn segment(lemmas: &[String], target_len: usize) -> Vec<Vec<String>> {
    assert!(target_len >= 1, "target_len must be positive");
    let mut chunks: Vec<Vec<String>> = lemmas.chunks(target_len).map(<[String]>::to_vec).collect();
    if chunks.len() >= 2 {
        let last_len = chunks.last().map_or(0, Vec::len);
        if last_len < target_len && last_len * 2 < target_len {
            let tail = chunks.pop().unwrap();
            chunks.last_mut().unwrap().extend(tail);
        }
    }
    chunks
}

/// Section of segment `index` among `count`: `floor(index * 5 / count) + 1`.
pub fn section_of(index: usize, count: usize) -> u8 {
    assert!(index < count);
    (index * 5 / count + 1) as u8
}

/// Sets `section` from each segment's position; segments must be in
/// `seq_index` order.
pub fn assign_sections(segments: &mut [Segment]) {
    let n = segments.len();
    for (i, s) in segments.iter_mut().enumerate() {
        debug_assert_eq!(s.seq_index, i);
        s.section = section_of(i, n);
    }
}

pub fn segment_id(play_id: &str, index: usize) -> String {
    format!("{play_id}§{index:02}")
}

/// Segments one play's lemmas and assigns sections.
pub fn segment_play(play_id: &str, lemmas: &[String], target_len: usize) -> Vec<Segment> {
    let mut segments: Vec<Segment> = segment(lemmas, target_len)
        .into_iter()
        .enumerate()
        .map(|(i, lemmas)| Segment {
            segment_id: segment_id(play_id, i),
            play_id: play_id.to_string(),
            seq_index: i,
            section: 1,
            lemmas,
        })
        .collect();
    assign_sections(&mut segments);
    segments
}

/// Segments file: `segment_id<TAB>play_id<TAB>seq_index<TAB>section<TAB>lemmas`.
pub fn write_segments<W: Write>(mut w: W, segments: &[Segment]) -> std::io::Result<()> {
    for s in segments {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            s.segment_id,
            s.play_id,
            s.seq_index,
            s.section,
            s.lemmas.join(" ")
        )?;
    }
    Ok(())
}

pub fn read_segments<R: BufRead>(r: R) -> Result<Vec<Segment>, LingError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |detail: &str| LingError::BadSegmentLine {
            line: i + 1,
            detail: detail.to_string(),
        };
        let f: Vec<&str> = line.splitn(5, '\t').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let section: u8 = f[3].parse().map_err(|_| bad("bad section"))?;
        if !(1..=5).contains(&section) {
            return Err(bad("section out of range"));
        }
        out.push(Segment {
            segment_id: f[0].to_string(),
            play_id: f[1].to_string(),
            seq_index: f[2].parse().map_err(|_| bad("bad seq_index"))?,
            section,
            lemmas: f[4].split(' ').filter(|s| !s.is_empty()).map(String::from).collect(),
        });
    }
    Ok(out)
}
