//! TEI play ingestion: metadata, performable text extraction and collection
//! filtering.
//!
//! Elements are matched by local name so TEI P4 (`TEI.2`, `div1`/`div2`) and
//! P5 (`TEI`, typed `div`) documents are handled by the same code path.
//! Inside the body only speeches (`sp`) and stage directions (`stage`)
//! contribute text. The following subtrees never contribute text:
//! `speaker`, `note`, `head`, `castList`, `castItem`, `trailer`, `fw`,
//! `figure`, `docTitle`, `docAuthor`; `front` and `back` are outside the
//! body and skipped entirely.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("no performable text found in body")]
    MissingBody,
    #[error("metadata table lacks required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate play id `{0}`")]
    DuplicateId(String),
    #[error("row {row}: bad value {value:?} in column `{column}`")]
    BadField { row: usize, column: String, value: String },
    #[error("line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Genre {
    Comedy,
    Tragedy,
    Tragicomedy,
    Other(String),
}

impl Genre {
    /// Parses the canonical label written by [`Genre::as_str`].
    pub fn from_canonical(label: &str) -> Genre {
        match label {
            "comedy" => Genre::Comedy,
            "tragedy" => Genre::Tragedy,
            "tragicomedy" => Genre::Tragicomedy,
            other => Genre::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Genre::Comedy => "comedy",
            Genre::Tragedy => "tragedy",
            Genre::Tragicomedy => "tragicomedy",
            Genre::Other(label) => label,
        }
    }

    /// Two-letter code used in dendrogram leaf labels.
    pub fn code(&self) -> &'static str {
        match self {
            Genre::Comedy => "CO",
            Genre::Tragedy => "TR",
            Genre::Tragicomedy => "TC",
            Genre::Other(_) => "OT",
        }
    }

    pub fn unknown() -> Genre {
        Genre::Other("unknown".to_string())
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps historical genre labels onto [`Genre`].
///
/// Keys are compared after lowercasing and whitespace collapsing. The default
/// table covers the French and English spellings of the three subgenres;
/// callers can add entries such as `"comédie héroïque" -> comedy`.
#[derive(Debug, Clone)]
pub struct GenreTable {
    entries: BTreeMap<String, Genre>,
}

impl Default for GenreTable {
    fn default() -> Self {
        let mut table = GenreTable {
            entries: BTreeMap::new(),
        };
        for label in ["comédie", "comedie", "comedy"] {
            table.insert(label, Genre::Comedy);
        }
        for label in ["tragédie", "tragedie", "tragedy"] {
            table.insert(label, Genre::Tragedy);
        }
        for label in [
            "tragi-comédie",
            "tragicomédie",
            "tragi-comedie",
            "tragicomedie",
            "tragicomedy",
            "tragi-comedy",
        ] {
            table.insert(label, Genre::Tragicomedy);
        }
        table
    }
}

impl GenreTable {
    pub fn insert(&mut self, label: &str, genre: Genre) {
        self.entries.insert(normalize_label(label), genre);
    }

    /// Unmapped labels become `Other` with the trimmed original label.
    pub fn map(&self, label: &str) -> Genre {
        let key = normalize_label(label);
        if key.is_empty() {
            return Genre::unknown();
        }
        self.entries
            .get(&key)
            .cloned()
            .unwrap_or_else(|| Genre::Other(collapse_ws(label)))
    }
}

fn normalize_label(label: &str) -> String {
    collapse_ws(label).to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    Verse,
    Prose,
    Mixed,
    Unknown,
}

impl Form {
    pub fn parse(label: &str) -> Form {
        match normalize_label(label).as_str() {
            "verse" | "vers" => Form::Verse,
            "prose" => Form::Prose,
            "mixed" | "mixte" | "vers et prose" => Form::Mixed,
            _ => Form::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Form::Verse => "verse",
            Form::Prose => "prose",
            Form::Mixed => "mixed",
            Form::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayMetadata {
    pub play_id: String,
    pub title: String,
    pub author: String,
    /// Publication year; `None` when neither header nor metadata table give one.
    pub year: Option<i32>,
    pub genre: Genre,
    pub form: Form,
    pub act_count: u32,
    pub source_path: String,
}

impl PlayMetadata {
    pub fn new(play_id: impl Into<String>) -> Self {
        PlayMetadata {
            play_id: play_id.into(),
            title: String::new(),
            author: String::new(),
            year: None,
            genre: Genre::unknown(),
            form: Form::Unknown,
            act_count: 0,
            source_path: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Speech,
    StageDirection,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Speech => "speech",
            BlockKind::StageDirection => "stage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBlock {
    pub kind: BlockKind,
    pub act_index: Option<u32>,
    pub scene_index: Option<u32>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPlayText {
    pub play_id: String,
    pub blocks: Vec<TextBlock>,
}

impl RawPlayText {
    /// Block texts joined by single spaces, optionally without stage directions.
    pub fn joined_text(&self, include_stage_directions: bool) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            if block.kind == BlockKind::StageDirection && !include_stage_directions {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&block.text);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCriteria {
    pub year_min: i32,
    pub year_max: i32,
    pub act_min: u32,
    pub act_max: u32,
    pub genres: BTreeSet<Genre>,
}

impl Default for FilterCriteria {
    /// 1630-1789, three to five acts, the three major subgenres.
    fn default() -> Self {
        FilterCriteria {
            year_min: 1630,
            year_max: 1789,
            act_min: 3,
            act_max: 5,
            genres: [Genre::Comedy, Genre::Tragedy, Genre::Tragicomedy]
                .into_iter()
                .collect(),
        }
    }
}

impl FilterCriteria {
    pub fn accepts(&self, play: &PlayMetadata) -> bool {
        let year_ok = play.year.is_some_and(|y| self.year_min <= y && y <= self.year_max);
        year_ok && self.act_min <= play.act_count && play.act_count <= self.act_max && self.genres.contains(&play.genre)
    }
}

pub fn filter_collection(plays: &[PlayMetadata], criteria: &FilterCriteria) -> Vec<PlayMetadata> {
    plays.iter().filter(|p| criteria.accepts(p)).cloned().collect()
}

// ---------------------------------------------------------------------------
// TEI parsing

const SKIPPED_IN_BODY: &[&str] = &[
    "speaker",
    "note",
    "head",
    "castList",
    "castItem",
    "trailer",
    "fw",
    "figure",
    "docTitle",
    "docAuthor",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DivKind {
    Act,
    Scene,
    Other,
}

fn div_kind(e: &BytesStart<'_>) -> DivKind {
    let name = e.local_name();
    let name = name.as_ref();
    if !(name == b"div" || (name.len() == 4 && name.starts_with(b"div"))) {
        return DivKind::Other;
    }
    match attr(e, b"type").map(|t| t.to_lowercase()).as_deref() {
        Some("act") | Some("acte") => DivKind::Act,
        Some("scene") | Some("scène") => DivKind::Scene,
        _ => DivKind::Other,
    }
}

fn attr(e: &BytesStart<'_>, key: &[u8]) -> Option<String> {
    e.attributes().flatten().find_map(|a| {
        (a.key.local_name().as_ref() == key)
            .then(|| a.unescape_value().ok().map(|v| v.into_owned()))
            .flatten()
    })
}

fn first_year(s: &str) -> Option<i32> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i + 4 <= bytes.len() {
        if bytes[i..i + 4].iter().all(u8::is_ascii_digit)
            && (i + 4 == bytes.len() || !bytes[i + 4].is_ascii_digit())
            && (i == 0 || !bytes[i - 1].is_ascii_digit())
        {
            return s[i..i + 4].parse().ok().filter(|&y: &i32| y > 0);
        }
        i += 1;
    }
    None
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Header field currently being captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Capture {
    Title,
    Author,
    Idno,
    Genre,
    Form,
    Date,
}

#[derive(Default)]
struct HeaderFields {
    title: Option<String>,
    author: Option<String>,
    idno: Option<String>,
    genre: Option<String>,
    form: Option<String>,
    doc_date: Option<i32>,
    source_date: Option<i32>,
}

struct Extractor {
    blocks: Vec<TextBlock>,
    speech: String,
    stage: String,
    stage_depth: usize,
    act: Option<u32>,
    scene: Option<u32>,
    acts_seen: u32,
}

impl Extractor {
    fn flush(&mut self, kind: BlockKind) {
        let buf = match kind {
            BlockKind::Speech => &mut self.speech,
            BlockKind::StageDirection => &mut self.stage,
        };
        let text = collapse_ws(buf);
        buf.clear();
        if !text.is_empty() {
            self.blocks.push(TextBlock {
                kind,
                act_index: self.act,
                scene_index: self.scene,
                text,
            });
        }
    }
}

/// Parses one TEI document into metadata and performable text.
///
/// `play_id` comes from the root `xml:id`/`id` attribute, else the first
/// header `idno`; it is empty when neither exists (see [`parse_tei_file`]).
pub fn parse_tei(xml: &[u8], genres: &GenreTable) -> Result<(PlayMetadata, RawPlayText), CorpusError> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().check_end_names = true;

    let mut stack: Vec<String> = Vec::new();
    let mut root_id: Option<String> = None;
    let mut saw_root = false;
    let mut header = HeaderFields::default();
    let mut capture: Option<(Capture, usize, String)> = None;
    let mut in_header = false;
    let mut body_depth: Option<usize> = None;
    let mut body_done = false;
    let mut skip_depth: Option<usize> = None;
    let mut sp_depth: Option<usize> = None;
    let mut ex = Extractor {
        blocks: Vec::new(),
        speech: String::new(),
        stage: String::new(),
        stage_depth: 0,
        act: None,
        scene: None,
        acts_seen: 0,
    };

    let malformed = |e: &dyn fmt::Display, pos: u64| CorpusError::MalformedXml(format!("{e} (at byte {pos})"));

    loop {
        let pos = reader.buffer_position();
        let event = reader.read_event().map_err(|e| malformed(&e, pos))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if !saw_root {
                    saw_root = true;
                    if name != "TEI" && name != "TEI.2" {
                        return Err(CorpusError::MalformedXml(format!(
                            "root element is <{name}>, expected TEI"
                        )));
                    }
                    root_id = attr(e, b"id").filter(|s| !s.trim().is_empty());
                }
                let depth = stack.len();

                if in_header && capture.is_none() {
                    let parent = stack.last().map(String::as_str);
                    let in_source = stack.iter().any(|s| s == "sourceDesc" || s == "SourceDesc");
                    let kind = match name.as_str() {
                        "title" if parent == Some("titleStmt") && header.title.is_none() => Some(Capture::Title),
                        "author" if parent == Some("titleStmt") && header.author.is_none() => Some(Capture::Author),
                        "idno" if header.idno.is_none() => Some(Capture::Idno),
                        "genre" if header.genre.is_none() => Some(Capture::Genre),
                        "term" => match attr(e, b"type").as_deref() {
                            Some("genre") if header.genre.is_none() => Some(Capture::Genre),
                            Some("form") | Some("versification") if header.form.is_none() => Some(Capture::Form),
                            _ => None,
                        },
                        "docDate" | "date" => {
                            let year = attr(e, b"when")
                                .or_else(|| attr(e, b"value"))
                                .and_then(|v| first_year(&v));
                            let mut ignored = None;
                            let target = if name == "docDate" {
                                &mut header.doc_date
                            } else if in_source {
                                &mut header.source_date
                            } else {
                                &mut ignored
                            };
                            if target.is_none() {
                                if let Some(y) = year {
                                    *target = Some(y);
                                    None
                                } else if name == "docDate" || in_source {
                                    Some(Capture::Date)
                                } else {
                                    None
                                }
                            } else {
                                None
                            }
                        }
                        _ => None,
                    };
                    if let (Some(kind), false) = (kind, is_empty) {
                        capture = Some((kind, depth, String::new()));
                    }
                }

                if name == "teiHeader" && !is_empty {
                    in_header = true;
                }
                if name == "docDate" && !in_header && header.doc_date.is_none() {
                    if let Some(y) = attr(e, b"when")
                        .or_else(|| attr(e, b"value"))
                        .and_then(|v| first_year(&v))
                    {
                        header.doc_date = Some(y);
                    }
                }
                if name == "body" && body_depth.is_none() && !body_done && !is_empty {
                    body_depth = Some(depth);
                }

                if body_depth.is_some() && skip_depth.is_none() {
                    match div_kind(e) {
                        DivKind::Act => {
                            ex.acts_seen += 1;
                            ex.act = Some(ex.acts_seen);
                            ex.scene = None;
                        }
                        DivKind::Scene => ex.scene = Some(ex.scene.map_or(1, |s| s + 1)),
                        DivKind::Other => {}
                    }
                    if SKIPPED_IN_BODY.contains(&name.as_str()) {
                        if !is_empty {
                            skip_depth = Some(depth);
                        }
                    } else if name == "stage" {
                        if ex.stage_depth == 0 && sp_depth.is_some() {
                            // A stage direction interrupts the speech.
                            ex.flush(BlockKind::Speech);
                        }
                        if !is_empty {
                            ex.stage_depth += 1;
                        }
                    } else if name == "sp" && sp_depth.is_none() && !is_empty {
                        sp_depth = Some(depth);
                    } else {
                        // Element boundaries (l, p, lb, ...) separate words.
                        if ex.stage_depth > 0 {
                            ex.stage.push(' ');
                        } else if sp_depth.is_some() {
                            ex.speech.push(' ');
                        }
                    }
                }

                if !is_empty {
                    stack.push(name);
                }
            }
            Event::End(ref e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                stack.pop();
                let depth = stack.len();
                if let Some((kind, d, _)) = &capture {
                    if *d == depth {
                        let (kind, text) = (*kind, collapse_ws(&capture.take().unwrap().2));
                        match kind {
                            Capture::Title => header.title = Some(text),
                            Capture::Author => header.author = Some(text),
                            Capture::Idno => header.idno = Some(text).filter(|s| !s.is_empty()),
                            Capture::Genre => header.genre = Some(text),
                            Capture::Form => header.form = Some(text),
                            Capture::Date => {
                                let y = first_year(&text);
                                if name == "docDate" {
                                    header.doc_date = header.doc_date.or(y);
                                } else {
                                    header.source_date = header.source_date.or(y);
                                }
                            }
                        }
                    }
                }
                if name == "teiHeader" {
                    in_header = false;
                }
                if skip_depth == Some(depth) {
                    skip_depth = None;
                } else if skip_depth.is_none() && body_depth.is_some() {
                    if name == "stage" && ex.stage_depth > 0 {
                        ex.stage_depth -= 1;
                        if ex.stage_depth == 0 {
                            ex.flush(BlockKind::StageDirection);
                        }
                    } else if sp_depth == Some(depth) {
                        ex.flush(BlockKind::Speech);
                        sp_depth = None;
                    } else if ex.stage_depth > 0 {
                        ex.stage.push(' ');
                    } else if sp_depth.is_some() {
                        ex.speech.push(' ');
                    }
                }
                if body_depth == Some(depth) {
                    // Only the first body is read.
                    body_depth = None;
                    body_done = true;
                }
            }
            Event::Text(ref t) => {
                let pos = reader.buffer_position();
                let text = t.unescape().map_err(|e| malformed(&e, pos))?;
                push_text(&mut capture, &mut ex, skip_depth, body_depth, sp_depth, &text);
            }
            Event::CData(ref t) => {
                let text = String::from_utf8_lossy(t.as_ref()).into_owned();
                push_text(&mut capture, &mut ex, skip_depth, body_depth, sp_depth, &text);
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if !saw_root {
        return Err(CorpusError::MalformedXml("document has no root element".into()));
    }
    if !stack.is_empty() {
        return Err(CorpusError::MalformedXml(format!(
            "unexpected end of document inside <{}>",
            stack.last().unwrap()
        )));
    }
    if ex.blocks.is_empty() {
        return Err(CorpusError::MissingBody);
    }

    let play_id = root_id.or(header.idno).unwrap_or_default();
    let meta = PlayMetadata {
        play_id: play_id.clone(),
        title: header.title.unwrap_or_default(),
        author: header.author.unwrap_or_default(),
        year: header.doc_date.or(header.source_date),
        genre: header.genre.map(|g| genres.map(&g)).unwrap_or_else(Genre::unknown),
        form: header.form.map(|f| Form::parse(&f)).unwrap_or(Form::Unknown),
        act_count: ex.acts_seen,
        source_path: String::new(),
    };
    Ok((
        meta,
        RawPlayText {
            play_id,
            blocks: ex.blocks,
        },
    ))
}

fn push_text(
    capture: &mut Option<(Capture, usize, String)>,
    ex: &mut Extractor,
    skip_depth: Option<usize>,
    body_depth: Option<usize>,
    sp_depth: Option<usize>,
    text: &str,
) {
    if let Some((_, _, buf)) = capture {
        buf.push_str(text);
        return;
    }
    if skip_depth.is_some() || body_depth.is_none() {
        return;
    }
    if ex.stage_depth > 0 {
        ex.stage.push_str(text);
    } else if sp_depth.is_some() {
        ex.speech.push_str(text);
    }
}

/// Reads and parses one file; an empty play id falls back to the file stem.
pub fn parse_tei_file(path: &Path, genres: &GenreTable) -> Result<(PlayMetadata, RawPlayText), CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let (mut meta, mut text) = parse_tei(&bytes, genres)?;
    if meta.play_id.is_empty() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        meta.play_id = stem.clone();
        text.play_id = stem;
    }
    meta.source_path = path.to_string_lossy().into_owned();
    Ok((meta, text))
}

/// Checks that a byte string is well-formed XML with the same reader the
/// TEI parser uses.
pub fn check_well_formed(xml: &[u8]) -> Result<(), CorpusError> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().check_end_names = true;
    let mut depth = 0usize;
    let mut roots = 0usize;
    loop {
        let pos = reader.buffer_position();
        match reader.read_event() {
            Ok(Event::Start(_)) => {
                if depth == 0 {
                    roots += 1;
                }
                depth += 1;
            }
            Ok(Event::Empty(_)) if depth == 0 => roots += 1,
            Ok(Event::End(_)) => depth -= 1,
            Ok(Event::Text(t)) => {
                t.unescape()
                    .map_err(|e| CorpusError::MalformedXml(format!("{e} (at byte {pos})")))?;
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(CorpusError::MalformedXml(format!("{e} (at byte {pos})"))),
        }
    }
    if depth != 0 || roots != 1 {
        return Err(CorpusError::MalformedXml(format!(
            "expected one closed root element, found {roots} (open depth {depth})"
        )));
    }
    Ok(())
}

/// Result of loading a directory of TEI files.
#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub plays: Vec<(PlayMetadata, RawPlayText)>,
    pub failures: Vec<(PathBuf, CorpusError)>,
}

/// Parses every `.xml` file of `dir` (non-recursive) in parallel.
///
/// Results are ordered by file name. Files that fail to parse, or whose play
/// id repeats an earlier file's, are reported in `failures` and skipped.
pub fn load_corpus_dir(dir: &Path, genres: &GenreTable) -> Result<CorpusLoad, CorpusError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CorpusError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    paths.sort();

    let parsed: Vec<_> = paths
        .par_iter()
        .map(|p| (p.clone(), parse_tei_file(p, genres)))
        .collect();

    let mut load = CorpusLoad::default();
    let mut seen = HashSet::new();
    for (path, result) in parsed {
        match result {
            Ok((meta, text)) => {
                if seen.insert(meta.play_id.clone()) {
                    load.plays.push((meta, text));
                } else {
                    let id = meta.play_id;
                    load.failures.push((path, CorpusError::DuplicateId(id)));
                }
            }
            Err(e) => load.failures.push((path, e)),
        }
    }
    Ok(load)
}

// ---------------------------------------------------------------------------
// Metadata table

/// One row of the metadata table; `None` means the column was absent or the
/// cell empty, so the header-derived value should stand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataRow {
    pub meta: PlayMetadata,
    has_title: bool,
    has_author: bool,
    has_form: bool,
    has_acts: bool,
}

fn find_col(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Parses the metadata table. Required columns: `id`, `genre`, `year`;
/// optional: `title`, `author`, `form`, `acts`/`act_count`. Other columns
/// are ignored.
pub fn load_metadata_table(csv_bytes: &[u8], genres: &GenreTable) -> Result<Vec<MetadataRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(csv_bytes);
    let headers = reader.headers()?.clone();
    let required = |name: &str| find_col(&headers, &[name]).ok_or_else(|| CorpusError::MissingColumn(name.to_string()));
    let id_col = required("id")?;
    let genre_col = required("genre")?;
    let year_col = required("year")?;
    let title_col = find_col(&headers, &["title"]);
    let author_col = find_col(&headers, &["author"]);
    let form_col = find_col(&headers, &["form"]);
    let acts_col = find_col(&headers, &["acts", "act_count"]);

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 2;
        let cell = |c: Option<usize>| c.and_then(|c| record.get(c)).map(str::trim).filter(|s| !s.is_empty());
        let id = cell(Some(id_col)).ok_or_else(|| CorpusError::BadField {
            row: row_no,
            column: "id".into(),
            value: String::new(),
        })?;
        if !seen.insert(id.to_string()) {
            return Err(CorpusError::DuplicateId(id.to_string()));
        }
        let year = match cell(Some(year_col)) {
            None => None,
            Some(v) => Some(first_year(v).ok_or_else(|| CorpusError::BadField {
                row: row_no,
                column: "year".into(),
                value: v.to_string(),
            })?),
        };
        let act_count = match cell(acts_col) {
            None => None,
            Some(v) => Some(v.parse::<u32>().map_err(|_| CorpusError::BadField {
                row: row_no,
                column: "acts".into(),
                value: v.to_string(),
            })?),
        };
        let mut meta = PlayMetadata::new(id);
        meta.genre = cell(Some(genre_col)).map_or_else(Genre::unknown, |g| genres.map(g));
        meta.year = year;
        meta.title = cell(title_col).unwrap_or_default().to_string();
        meta.author = cell(author_col).unwrap_or_default().to_string();
        meta.form = cell(form_col).map_or(Form::Unknown, Form::parse);
        meta.act_count = act_count.unwrap_or(0);
        rows.push(MetadataRow {
            has_title: cell(title_col).is_some(),
            has_author: cell(author_col).is_some(),
            has_form: cell(form_col).is_some(),
            has_acts: act_count.is_some(),
            meta,
        });
    }
    Ok(rows)
}

impl MetadataRow {
    /// Overrides header-derived fields with the fields present in this row.
    pub fn apply_to(&self, target: &mut PlayMetadata) {
        target.genre = self.meta.genre.clone();
        if self.meta.year.is_some() {
            target.year = self.meta.year;
        }
        if self.has_title {
            target.title = self.meta.title.clone();
        }
        if self.has_author {
            target.author = self.meta.author.clone();
        }
        if self.has_form {
            target.form = self.meta.form;
        }
        if self.has_acts {
            target.act_count = self.meta.act_count;
        }
    }
}

/// Applies table rows to plays by id; returns ids in the table with no play.
pub fn apply_metadata(plays: &mut [PlayMetadata], rows: &[MetadataRow]) -> Vec<String> {
    let by_id: BTreeMap<&str, &MetadataRow> = rows.iter().map(|r| (r.meta.play_id.as_str(), r)).collect();
    let mut used = HashSet::new();
    for play in plays.iter_mut() {
        if let Some(row) = by_id.get(play.play_id.as_str()) {
            row.apply_to(play);
            used.insert(play.play_id.clone());
        }
    }
    rows.iter()
        .filter(|r| !used.contains(&r.meta.play_id))
        .map(|r| r.meta.play_id.clone())
        .collect()
}

// ---------------------------------------------------------------------------
// Manifest and block files

pub const MANIFEST_HEADER: &str = "play_id\ttitle\tauthor\tyear\tgenre\tform\tact_count\ttoken_count";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub meta: PlayMetadata,
    pub token_count: usize,
}

pub fn write_manifest<W: Write>(mut w: W, entries: &[ManifestEntry]) -> std::io::Result<()> {
    writeln!(w, "{MANIFEST_HEADER}")?;
    for e in entries {
        let m = &e.meta;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.play_id,
            collapse_ws(&m.title),
            collapse_ws(&m.author),
            m.year.map(|y| y.to_string()).unwrap_or_default(),
            m.genre,
            m.form.as_str(),
            m.act_count,
            e.token_count
        )?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<ManifestEntry>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(Path::new("<manifest>"), e))?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |detail: &str| CorpusError::BadLine {
            line: i + 1,
            detail: detail.to_string(),
        };
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let mut meta = PlayMetadata::new(f[0]);
        meta.title = f[1].to_string();
        meta.author = f[2].to_string();
        meta.year = if f[3].is_empty() {
            None
        } else {
            Some(f[3].parse().map_err(|_| bad("bad year"))?)
        };
        meta.genre = Genre::from_canonical(f[4]);
        meta.form = Form::parse(f[5]);
        meta.act_count = f[6].parse().map_err(|_| bad("bad act_count"))?;
        let token_count = f[7].parse().map_err(|_| bad("bad token_count"))?;
        out.push(ManifestEntry { meta, token_count });
    }
    Ok(out)
}

/// Writes blocks as `play_id<TAB>kind<TAB>act<TAB>scene<TAB>text`.
pub fn write_blocks<W: Write>(mut w: W, texts: &[RawPlayText]) -> std::io::Result<()> {
    let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in texts {
        for b in &t.blocks {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                t.play_id,
                b.kind.as_str(),
                opt(b.act_index),
                opt(b.scene_index),
                b.text
            )?;
        }
    }
    Ok(())
}

pub fn read_blocks<R: BufRead>(r: R) -> Result<Vec<RawPlayText>, CorpusError> {
    let mut out: Vec<RawPlayText> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(Path::new("<blocks>"), e))?;
        if line.is_empty() {
            continue;
        }
        let bad = |detail: &str| CorpusError::BadLine {
            line: i + 1,
            detail: detail.to_string(),
        };
        let f: Vec<&str> = line.splitn(5, '\t').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let kind = match f[1] {
            "speech" => BlockKind::Speech,
            "stage" => BlockKind::StageDirection,
            _ => return Err(bad("unknown block kind")),
        };
        let opt = |s: &str| -> Result<Option<u32>, CorpusError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad index"))
            }
        };
        let block = TextBlock {
            kind,
            act_index: opt(f[2])?,
            scene_index: opt(f[3])?,
            text: f[4].to_string(),
        };
        match out.last_mut() {
            Some(last) if last.play_id == f[0] => last.blocks.push(block),
            _ => out.push(RawPlayText {
                play_id: f[0].to_string(),
                blocks: vec![block],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tei(body: &str) -> String {
        format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
<TEI xmlns="http://www.tei-c.org/ns/1.0" xml:id="tc0001">
  <teiHeader>
    <fileDesc>
      <titleStmt><title>Le Test</title><author>Anonyme</author></titleStmt>
      <publicationStmt><date when="2014">2014</date></publicationStmt>
      <sourceDesc><genre>Comédie</genre><date when="1671"/></sourceDesc>
    </fileDesc>
  </teiHeader>
  <text><front><castList><castItem>ARGAN</castItem></castList></front>
  <body>{body}</body></text>
</TEI>"#
        )
    }

    fn parse(xml: &str) -> Result<(PlayMetadata, RawPlayText), CorpusError> {
        parse_tei(xml.as_bytes(), &GenreTable::default())
    }

    #[test]
    fn minimal_speech() {
        let (meta, text) = parse(&tei("<sp><l>Bonjour.</l></sp>")).unwrap();
        assert_eq!(text.blocks.len(), 1);
        assert_eq!(text.blocks[0].kind, BlockKind::Speech);
        assert_eq!(text.blocks[0].text, "Bonjour.");
        assert_eq!(meta.play_id, "tc0001");
        assert_eq!(meta.title, "Le Test");
        assert_eq!(meta.author, "Anonyme");
        assert_eq!(meta.genre, Genre::Comedy);
        assert_eq!(meta.year, Some(1671));
        assert_eq!(meta.form, Form::Unknown);
        assert_eq!(meta.act_count, 0);
    }

    #[test]
    fn speaker_and_notes_are_stripped() {
        let body = r#"<sp who="argan"><speaker>ARGAN</speaker><l>Ah, mon <hi>cher</hi> ami,</l>
            <note>variante: cher</note><l>que je suis aise.</l></sp>"#;
        let (_, text) = parse(&tei(body)).unwrap();
        // hand-stripped oracle
        assert_eq!(text.blocks[0].text, "Ah, mon cher ami, que je suis aise.");
    }

    #[test]
    fn acts_are_counted_and_indexed() {
        let mut body = String::new();
        for a in 1..=5 {
            body.push_str(&format!(
                r#"<div type="act" n="{a}"><head>ACTE {a}</head>
                   <div type="scene"><sp><p>a{a}s1</p></sp></div>
                   <div type="scene"><sp><p>a{a}s2</p></sp></div></div>"#
            ));
        }
        let (meta, text) = parse(&tei(&body)).unwrap();
        assert_eq!(meta.act_count, 5);
        assert_eq!(text.blocks.len(), 10);
        assert_eq!(text.blocks[3].text, "a2s2");
        assert_eq!(text.blocks[3].act_index, Some(2));
        assert_eq!(text.blocks[3].scene_index, Some(2));
        assert!(text.blocks.iter().all(|b| !b.text.contains("ACTE")));
    }

    #[test]
    fn p4_names_and_stage_inside_speech() {
        let xml = r#"<TEI.2><teiHeader><fileDesc><titleStmt><title>P4</title></titleStmt>
            </fileDesc></teiHeader><text><body>
            <div1 type="acte"><div2 type="scène">
            <stage>Le théâtre représente une chambre.</stage>
            <sp><speaker>A</speaker><l>Entrez,</l><stage>(il sort)</stage><l>et partez.</l></sp>
            </div2></div1></body></text></TEI.2>"#;
        let (meta, text) = parse(xml).unwrap();
        assert_eq!(meta.act_count, 1);
        assert_eq!(meta.play_id, "");
        let got: Vec<(BlockKind, &str)> = text.blocks.iter().map(|b| (b.kind, b.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (BlockKind::StageDirection, "Le théâtre représente une chambre."),
                (BlockKind::Speech, "Entrez,"),
                (BlockKind::StageDirection, "(il sort)"),
                (BlockKind::Speech, "et partez."),
            ]
        );
        assert_eq!(text.joined_text(false), "Entrez, et partez.");
    }

    #[test]
    fn entities_are_decoded() {
        let (_, text) = parse(&tei("<sp><l>Toi &amp; moi &lt;3</l></sp>")).unwrap();
        assert_eq!(text.blocks[0].text, "Toi & moi <3");
    }

    #[test]
    fn malformed_and_missing_body() {
        assert!(matches!(
            parse("<TEI><text><body><sp>oops</body></text></TEI>"),
            Err(CorpusError::MalformedXml(_))
        ));
        assert!(matches!(parse("<html/>"), Err(CorpusError::MalformedXml(_))));
        assert!(matches!(
            parse("<TEI><text><body><sp>unterminated"),
            Err(CorpusError::MalformedXml(_))
        ));
        assert!(matches!(
            parse(&tei("<div type=\"act\"><head>Rien</head></div>")),
            Err(CorpusError::MissingBody)
        ));
    }

    #[test]
    fn metadata_table_mapping() {
        let g = GenreTable::default();
        assert!(load_metadata_table(b"id,genre,year\n", &g).unwrap().is_empty());
        let rows = load_metadata_table(
            b"id,genre,year,extra\ntc1,Trag\xc3\xa9die,1650,x\ntc2,TRAGI-COM\xc3\x89DIE,1640,y\ntc3,pastorale,1700,\n",
            &g,
        )
        .unwrap();
        assert_eq!(rows[0].meta.genre, Genre::Tragedy);
        assert_eq!(rows[1].meta.genre, Genre::Tragicomedy);
        assert_eq!(rows[2].meta.genre, Genre::Other("pastorale".into()));
        assert!(matches!(
            load_metadata_table(b"id,genre,year\na,comedie,1700\na,comedie,1701\n", &g),
            Err(CorpusError::DuplicateId(id)) if id == "a"
        ));
        assert!(matches!(
            load_metadata_table(b"id,year\na,1700\n", &g),
            Err(CorpusError::MissingColumn(c)) if c == "genre"
        ));
    }

    #[test]
    fn metadata_overrides_only_present_fields() {
        let rows = load_metadata_table(
            "id,genre,year,acts\ntc9,comédie,1680,5\n".as_bytes(),
            &GenreTable::default(),
        )
        .unwrap();
        let mut plays = vec![PlayMetadata::new("tc9"), PlayMetadata::new("tc8")];
        plays[0].title = "Kept".into();
        let unused = apply_metadata(&mut plays, &rows);
        assert!(unused.is_empty());
        assert_eq!(plays[0].title, "Kept");
        assert_eq!(plays[0].act_count, 5);
        assert_eq!(plays[0].year, Some(1680));
        assert_eq!(plays[1].genre, Genre::unknown());
    }

    #[test]
    fn genre_table_is_extensible() {
        let mut g = GenreTable::default();
        assert_eq!(g.map("Comédie héroïque"), Genre::Other("Comédie héroïque".into()));
        g.insert("comédie héroïque", Genre::Comedy);
        assert_eq!(g.map("  Comédie   Héroïque "), Genre::Comedy);
    }

    fn play(year: i32, acts: u32, genre: Genre) -> PlayMetadata {
        let mut p = PlayMetadata::new(format!("p{year}{acts}"));
        p.year = Some(year);
        p.act_count = acts;
        p.genre = genre;
        p
    }

    #[test]
    fn filter_excludes_each_reason() {
        let c = FilterCriteria::default();
        assert!(filter_collection(&[], &c).is_empty());
        let plays = vec![
            play(1600, 5, Genre::Comedy),
            play(1700, 1, Genre::Tragedy),
            play(1700, 5, Genre::Other("pastorale".into())),
        ];
        assert!(filter_collection(&plays, &c).is_empty());
        let mut unknown_year = play(1700, 5, Genre::Comedy);
        unknown_year.year = None;
        assert!(!c.accepts(&unknown_year));
        assert!(c.accepts(&play(1789, 3, Genre::Tragicomedy)));
    }

    #[test]
    fn manifest_and_blocks_round_trip() {
        let (mut meta, text) = parse(&tei("<sp><l>Bonjour.</l></sp><stage>Il sort.</stage>")).unwrap();
        meta.form = Form::Verse;
        let entries = vec![ManifestEntry { meta, token_count: 1 }];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &entries).unwrap();
        let back = read_manifest(&buf[..]).unwrap();
        assert_eq!(back[0].meta.play_id, "tc0001");
        assert_eq!(back[0].meta.genre, Genre::Comedy);
        assert_eq!(back[0].meta.form, Form::Verse);
        assert_eq!(back[0].token_count, 1);

        let mut buf = Vec::new();
        write_blocks(&mut buf, std::slice::from_ref(&text)).unwrap();
        assert_eq!(read_blocks(&buf[..]).unwrap(), vec![text]);
    }

    #[test]
    fn well_formedness_check() {
        assert!(check_well_formed(b"<svg><g/></svg>").is_ok());
        assert!(check_well_formed(b"<svg><g></svg>").is_err());
        assert!(check_well_formed(b"<a/><b/>").is_err());
    }

    #[test]
    fn load_dir_skips_bad_files_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.xml"), tei("<sp><l>Deux.</l></sp>")).unwrap();
        std::fs::write(dir.path().join("a.xml"), "<TEI><text><body>").unwrap();
        std::fs::write(
            dir.path().join("c.xml"),
            "<TEI><text><body><sp>Trois.</sp></body></text></TEI>",
        )
        .unwrap();
        std::fs::write(dir.path().join("d.xml"), tei("<sp><l>Dup.</l></sp>")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let load = load_corpus_dir(dir.path(), &GenreTable::default()).unwrap();
        let ids: Vec<_> = load.plays.iter().map(|(m, _)| m.play_id.as_str()).collect();
        assert_eq!(ids, vec!["tc0001", "c"]);
        assert_eq!(load.failures.len(), 2);
        assert!(matches!(load.failures[1].1, CorpusError::DuplicateId(_)));
    }
}
