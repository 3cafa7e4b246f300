//! Per-subject text corpora on disk.
//!
//! Layout under the store root:
//!
//! ```text
//! <root>/<subject_id>/docs.jsonl          one DocumentRecord per line
//! <root>/<subject_id>/manifest.json       per-source document counts
//! <root>/<subject_id>/demographics.json
//! ```
//!
//! Writes take `&mut self`, which gives the single-writer contract per store
//! handle. Reads only need `&self`.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

pub const MIN_YEAR: i32 = 2000;
pub const MAX_YEAR: i32 = 2025;

const DOCS_FILE: &str = "docs.jsonl";
const MANIFEST_FILE: &str = "manifest.json";
const DEMOGRAPHICS_FILE: &str = "demographics.json";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("document is empty after cleaning")]
    EmptyDocument,
    #[error("year {0} outside [{MIN_YEAR}, {MAX_YEAR}]")]
    InvalidYear(i32),
    #[error("unknown subject {0:?}")]
    UnknownSubject(String),
    #[error("invalid subject id {0:?}")]
    InvalidSubjectId(String),
    #[error("document {0} already stored")]
    DuplicateDocument(String),
    #[error("age {0} outside [18, 110]")]
    InvalidAge(u32),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("batch line {line}: {message}")]
    Batch { line: usize, message: String },
    #[error("corrupt store file {path}: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    AnnualReport,
    News,
    VideoTranscript,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::AnnualReport, Source::News, Source::VideoTranscript];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::AnnualReport => "annual_report",
            Source::News => "news",
            Source::VideoTranscript => "video_transcript",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "annual_report" | "report" | "annualreport" => Ok(Source::AnnualReport),
            "news" => Ok(Source::News),
            "video_transcript" | "video" | "transcript" | "videotranscript" | "youtube" => {
                Ok(Source::VideoTranscript)
            }
            _ => Err(CorpusError::UnknownSource(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub subject_id: String,
    pub source: Source,
    pub year: i32,
    pub raw_text: String,
    pub clean_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub subject_id: String,
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub education: Option<String>,
    #[serde(default)]
    pub professional_summary: Option<String>,
}

impl Demographics {
    pub fn validate(&self) -> Result<()> {
        validate_subject_id(&self.subject_id)?;
        match self.age {
            Some(age) if !(18..=110).contains(&age) => Err(CorpusError::InvalidAge(age)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub annual_report: usize,
    pub news: usize,
    pub video_transcript: usize,
}

impl SourceCounts {
    pub fn get(&self, source: Source) -> usize {
        match source {
            Source::AnnualReport => self.annual_report,
            Source::News => self.news,
            Source::VideoTranscript => self.video_transcript,
        }
    }

    fn bump(&mut self, source: Source) {
        match source {
            Source::AnnualReport => self.annual_report += 1,
            Source::News => self.news += 1,
            Source::VideoTranscript => self.video_transcript += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.annual_report + self.news + self.video_transcript
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub subject_id: String,
    pub counts: SourceCounts,
}

fn map_punctuation(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{2035}' | '\u{2039}' | '\u{203A}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{2036}' | '\u{00AB}' | '\u{00BB}' => "\"",
        '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' => "-",
        '\u{2026}' => "...",
        _ => return None,
    })
}

/// Drops control and format characters (whitespace controls become spaces).
fn strip_controls(s: &str) -> String {
    s.chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() || is_format_char(c) {
                None
            } else {
                Some(c)
            }
        })
        .collect()
}

fn is_format_char(c: char) -> bool {
    matches!(c, '\u{00AD}' | '\u{200B}'..='\u{200F}' | '\u{202A}'..='\u{202E}' | '\u{2060}'..='\u{2064}' | '\u{FEFF}')
}

fn clean_once(raw: &str) -> String {
    let stripped = strip_controls(raw);
    let normalized: String = stripped.nfkc().collect();
    let mut mapped = String::with_capacity(normalized.len());
    for c in normalized.chars() {
        match map_punctuation(c) {
            Some(rep) => mapped.push_str(rep),
            None => mapped.push(c),
        }
    }
    strip_controls(&mapped).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Standardize surface text: NFKC normalization, control characters
/// dropped, typographic quotes and dashes mapped to ASCII, whitespace runs
/// collapsed and trimmed. Case is preserved. Idempotent.
pub fn clean_text(raw: &str) -> String {
    let mut current = clean_once(raw);
    // Dropping a control character can bring a base letter and a combining
    // mark together; iterate until the output is stable.
    loop {
        let next = clean_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Content hash of the ingestion inputs.
pub fn document_id(subject_id: &str, source: Source, year: i32, raw_text: &str) -> String {
    let mut h = Sha256::new();
    for part in [subject_id, source.as_str(), &year.to_string(), raw_text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn validate_subject_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CorpusError::InvalidSubjectId(id.to_string()))
    }
}

/// Build (but do not persist) a record from raw ingestion inputs.
pub fn prepare_document(subject_id: &str, source: Source, year: i32, raw_text: &str) -> Result<DocumentRecord> {
    validate_subject_id(subject_id)?;
    if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
        return Err(CorpusError::InvalidYear(year));
    }
    let clean = clean_text(raw_text);
    if clean.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    Ok(DocumentRecord {
        doc_id: document_id(subject_id, source, year, raw_text),
        subject_id: subject_id.to_string(),
        source,
        year,
        raw_text: raw_text.to_string(),
        clean_text: clean,
    })
}

/// One line of a JSON-lines ingestion batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchEntry {
    pub subject_id: String,
    pub source: Source,
    pub year: i32,
    pub text: String,
}

/// Parse a JSON-lines batch. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_batch(input: &str) -> Result<Vec<BatchEntry>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<BatchEntry>(l)
                .map_err(|e| CorpusError::Batch { line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CorpusStore {
    root: PathBuf,
}

impl CorpusStore {
    /// Open (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(CorpusStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn subject_dir(&self, subject_id: &str) -> Result<PathBuf> {
        validate_subject_id(subject_id)?;
        Ok(self.root.join(subject_id))
    }

    fn existing_subject_dir(&self, subject_id: &str) -> Result<PathBuf> {
        let dir = self.subject_dir(subject_id)?;
        if dir.is_dir() {
            Ok(dir)
        } else {
            Err(CorpusError::UnknownSubject(subject_id.to_string()))
        }
    }

    pub fn create_subject(&mut self, subject_id: &str) -> Result<()> {
        let dir = self.subject_dir(subject_id)?;
        fs::create_dir_all(&dir)?;
        if !dir.join(MANIFEST_FILE).exists() {
            self.write_manifest(subject_id, &SourceCounts::default())?;
        }
        Ok(())
    }

    pub fn has_subject(&self, subject_id: &str) -> bool {
        self.subject_dir(subject_id).map(|d| d.is_dir()).unwrap_or(false)
    }

    /// Subject ids present in the store, sorted.
    pub fn subjects(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    if validate_subject_id(name).is_ok() {
                        out.push(name.to_string());
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Clean, validate and append one document.
    pub fn ingest_document(&mut self, subject_id: &str, source: Source, year: i32, raw_text: &str) -> Result<DocumentRecord> {
        let record = prepare_document(subject_id, source, year, raw_text)?;
        self.create_subject(subject_id)?;
        let existing = self.documents(subject_id)?;
        if existing.iter().any(|d| d.doc_id == record.doc_id) {
            return Err(CorpusError::DuplicateDocument(record.doc_id));
        }
        let dir = self.subject_dir(subject_id)?;
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(DOCS_FILE))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;

        let mut counts = count_sources(&existing);
        counts.bump(source);
        self.write_manifest(subject_id, &counts)?;
        Ok(record)
    }

    pub fn documents(&self, subject_id: &str) -> Result<Vec<DocumentRecord>> {
        let dir = self.existing_subject_dir(subject_id)?;
        let path = dir.join(DOCS_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let reader = BufReader::new(File::open(&path)?);
        let mut docs = Vec::new();
        let mut seen = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: DocumentRecord =
                serde_json::from_str(&line).map_err(|source| CorpusError::Corrupt { path: path.clone(), source })?;
            if seen.insert(doc.doc_id.clone()) {
                docs.push(doc);
            }
        }
        Ok(docs)
    }

    /// Per-source counts, recomputed from the stored documents.
    pub fn manifest(&self, subject_id: &str) -> Result<CorpusManifest> {
        let docs = self.documents(subject_id)?;
        Ok(CorpusManifest { subject_id: subject_id.to_string(), counts: count_sources(&docs) })
    }

    fn write_manifest(&self, subject_id: &str, counts: &SourceCounts) -> Result<()> {
        let m = CorpusManifest { subject_id: subject_id.to_string(), counts: counts.clone() };
        let path = self.subject_dir(subject_id)?.join(MANIFEST_FILE);
        write_json_atomic(&path, &m)
    }

    pub fn put_demographics(&mut self, demo: &Demographics) -> Result<()> {
        demo.validate()?;
        self.create_subject(&demo.subject_id)?;
        let path = self.subject_dir(&demo.subject_id)?.join(DEMOGRAPHICS_FILE);
        write_json_atomic(&path, demo)
    }

    pub fn demographics(&self, subject_id: &str) -> Result<Option<Demographics>> {
        let path = self.existing_subject_dir(subject_id)?.join(DEMOGRAPHICS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let demo: Demographics = serde_json::from_str(&text).map_err(|source| CorpusError::Corrupt { path, source })?;
        demo.validate()?;
        Ok(Some(demo))
    }

    /// Path for an auxiliary per-subject file (e.g. a computed profile).
    pub fn subject_file(&self, subject_id: &str, name: &str) -> Result<PathBuf> {
        Ok(self.existing_subject_dir(subject_id)?.join(name))
    }
}

fn count_sources(docs: &[DocumentRecord]) -> SourceCounts {
    let mut c = SourceCounts::default();
    for d in docs {
        c.bump(d.source);
    }
    c
}

pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
