//! Document-level moral foundation scoring and per-subject profiles.

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStore, Source};
use crate::foundation::{Foundation, PerFoundation};
use crate::retry::{self, Admission, Attempt, RetryPolicy};
use crate::stats;

/// Score assigned to a foundation with no lexical evidence.
pub const NEUTRAL_PRIOR: f64 = 5.0;

const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon.tsv");

/// Five scores on the 0-10 scale.
pub type FoundationScores = PerFoundation<f64>;

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("empty input text")]
    EmptyInput,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("malformed scorer response: {0}")]
    MalformedResponse(String),
    #[error("no documents to aggregate")]
    EmptyCorpus,
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

pub type Result<T> = std::result::Result<T, ScoreError>;

pub fn check_scores(s: &FoundationScores) -> Result<()> {
    for (f, &v) in s.iter() {
        if !(0.0..=10.0).contains(&v) {
            return Err(ScoreError::MalformedResponse(format!("{} score {v} outside [0, 10]", f.name().to_lowercase())));
        }
    }
    Ok(())
}

/// Anything that maps cleaned text to five foundation scores.
pub trait MoralScorer: Send + Sync {
    fn score(&self, clean_text: &str) -> Result<FoundationScores>;
}

/// Score one cleaned document, enforcing the output contract.
pub fn score_document(clean_text: &str, scorer: &dyn MoralScorer) -> Result<FoundationScores> {
    if clean_text.trim().is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let s = scorer.score(clean_text)?;
    check_scores(&s)?;
    Ok(s)
}

/// Lowercased alphabetic runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase())
}

/// Light suffix stripping; leaves at least three characters of stem.
pub fn stem(word: &str) -> String {
    let n = word.chars().count();
    if n > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    for sfx in ["ingly", "edly", "ing", "ed", "ly"] {
        if n >= sfx.len() + 3 && word.ends_with(sfx) {
            return word[..word.len() - sfx.len()].to_string();
        }
    }
    if n >= 5 && ["shes", "ches", "xes", "sses", "zes"].iter().any(|s| word.ends_with(s)) {
        return word[..word.len() - 2].to_string();
    }
    if n >= 4 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// `(foundation, valence)` pairs per lemma. Tokens match a lemma exactly
/// first, then by stem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    exact: HashMap<String, Vec<(Foundation, f64)>>,
    stems: HashMap<String, Vec<(Foundation, f64)>>,
    entries: usize,
}

impl Lexicon {
    /// Parse `lemma<TAB>foundation<TAB>valence` lines. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(tsv: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (i, line) in tsv.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| ScoreError::Lexicon { line: line_no, message };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            let [lemma, foundation, valence] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let lemma = lemma.to_lowercase();
            if lemma.is_empty() || !lemma.chars().all(char::is_alphabetic) {
                return Err(err(format!("lemma {lemma:?} must be alphabetic")));
            }
            let foundation: Foundation = foundation.parse().map_err(|e| err(format!("{e}")))?;
            let valence: f64 = valence.parse().map_err(|_| err(format!("valence {valence:?} is not a number")))?;
            if !(0.0..=10.0).contains(&valence) {
                return Err(err(format!("valence {valence} outside [0, 10]")));
            }
            let slot = lex.exact.entry(lemma.clone()).or_default();
            if slot.iter().any(|(f, _)| *f == foundation) {
                return Err(err(format!("duplicate entry for {lemma:?} / {}", foundation.name())));
            }
            slot.push((foundation, valence));
            let stem_slot = lex.stems.entry(stem(&lemma)).or_default();
            if !stem_slot.iter().any(|(f, _)| *f == foundation) {
                stem_slot.push((foundation, valence));
            }
            lex.entries += 1;
        }
        Ok(lex)
    }

    /// The lexicon bundled with the crate.
    pub fn bundled() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn lookup(&self, token: &str) -> &[(Foundation, f64)] {
        if let Some(hit) = self.exact.get(token) {
            return hit;
        }
        self.stems.get(&stem(token)).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Deterministic reference scorer: each foundation's score is the mean
/// valence of its matched token occurrences, or [`NEUTRAL_PRIOR`].
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    lexicon: Lexicon,
}

impl LexiconScorer {
    pub fn new(lexicon: Lexicon) -> Self {
        LexiconScorer { lexicon }
    }
}

impl MoralScorer for LexiconScorer {
    fn score(&self, clean_text: &str) -> Result<FoundationScores> {
        if clean_text.trim().is_empty() {
            return Err(ScoreError::EmptyInput);
        }
        let mut sum = PerFoundation::splat(0.0f64);
        let mut count = PerFoundation::splat(0usize);
        for token in tokenize(clean_text) {
            for &(f, v) in self.lexicon.lookup(&token) {
                sum[f] += v;
                count[f] += 1;
            }
        }
        Ok(PerFoundation::from_fn(|f| if count[f] == 0 { NEUTRAL_PRIOR } else { sum[f] / count[f] as f64 }))
    }
}

/// Parse a remote scorer body: a JSON object with the five foundation
/// fields, each a number in [0, 10]. Extra fields are ignored.
pub fn parse_score_body(body: &str) -> Result<FoundationScores> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ScoreError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| ScoreError::MalformedResponse("expected a JSON object".into()))?;
    let scores = PerFoundation::try_from_fn(|f| {
        let key = f.name().to_lowercase();
        obj.get(&key)
            .ok_or_else(|| ScoreError::MalformedResponse(format!("missing field {key:?}")))?
            .as_f64()
            .ok_or_else(|| ScoreError::MalformedResponse(format!("field {key:?} is not a number")))
    })?;
    check_scores(&scores)?;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteScorerConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_in_flight() -> usize {
    8
}

impl RemoteScorerConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteScorerConfig {
            endpoint: endpoint.into(),
            timeout_secs: default_timeout_secs(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
        }
    }
}

/// HTTP client for an external scoring service: POST `{"text": ...}`,
/// expect the five foundation fields back.
pub struct RemoteScorer {
    config: RemoteScorerConfig,
    client: reqwest::blocking::Client,
    gate: Admission,
}

impl RemoteScorer {
    pub fn new(config: RemoteScorerConfig) -> Result<Self> {
        if config.endpoint.trim().is_empty() {
            return Err(ScoreError::ScorerUnavailable("no endpoint configured".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ScoreError::ScorerUnavailable(e.to_string()))?;
        let gate = Admission::new(config.max_in_flight);
        Ok(RemoteScorer { config, client, gate })
    }
}

impl MoralScorer for RemoteScorer {
    fn score(&self, clean_text: &str) -> Result<FoundationScores> {
        remote_score(self, clean_text)
    }
}

/// Score text through a configured remote endpoint with retries.
pub fn remote_score(scorer: &RemoteScorer, clean_text: &str) -> Result<FoundationScores> {
    if clean_text.trim().is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let _permit = scorer.gate.acquire();
    let payload = serde_json::json!({ "text": clean_text }).to_string();
    let outcome = retry::retry(&scorer.config.retry, |_| {
        let resp = scorer
            .client
            .post(&scorer.config.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(payload.clone())
            .send();
        let resp = match resp {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(ScoreError::ScorerUnavailable(e.to_string())),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(ScoreError::ScorerUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Attempt::Fail(ScoreError::ScorerUnavailable(format!("HTTP {status}")));
        }
        match resp.text() {
            Ok(body) => match parse_score_body(&body) {
                Ok(s) => Attempt::Done(s),
                Err(e) => Attempt::Fail(e),
            },
            Err(e) => Attempt::Retry(ScoreError::ScorerUnavailable(e.to_string())),
        }
    });
    outcome.map(|(s, _)| s).map_err(|(e, _)| e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoundationStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
    pub sd: f64,
    pub n_docs: usize,
}

impl From<stats::Descriptive> for FoundationStats {
    fn from(d: stats::Descriptive) -> Self {
        FoundationStats { mean: d.mean, median: d.median, min: d.min, max: d.max, q1: d.q1, q3: d.q3, sd: d.sd, n_docs: d.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoralProfile {
    pub subject_id: String,
    pub foundations: PerFoundation<FoundationStats>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_source: BTreeMap<Source, PerFoundation<FoundationStats>>,
}

impl MoralProfile {
    pub fn n_docs(&self) -> usize {
        self.foundations.harm.n_docs
    }

    pub fn means(&self) -> PerFoundation<f64> {
        self.foundations.map(|_, s| s.mean)
    }

    /// "median, min, max" with two decimals.
    pub fn summary_cell(&self, f: Foundation) -> String {
        let s = &self.foundations[f];
        format!("{:.2}, {:.2}, {:.2}", s.median, s.min, s.max)
    }

    /// Profile whose every statistic equals the given per-foundation value;
    /// handy for synthetic subjects.
    pub fn constant(subject_id: impl Into<String>, values: PerFoundation<f64>) -> Self {
        MoralProfile {
            subject_id: subject_id.into(),
            foundations: values.map(|_, &v| FoundationStats {
                mean: v,
                median: v,
                min: v,
                max: v,
                q1: v,
                q3: v,
                sd: 0.0,
                n_docs: 1,
            }),
            by_source: BTreeMap::new(),
        }
    }
}

fn summarize(scores: &[FoundationScores]) -> Result<PerFoundation<FoundationStats>> {
    if scores.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    PerFoundation::try_from_fn(|f| {
        let col: Vec<f64> = scores.iter().map(|s| s[f]).collect();
        stats::descriptive(&col)
            .map(FoundationStats::from)
            .map_err(|e| ScoreError::MalformedResponse(format!("{} scores: {e}", f.name())))
    })
}

/// Pool document scores into per-foundation descriptive statistics.
pub fn aggregate_profile(subject_id: &str, scores: &[FoundationScores]) -> Result<MoralProfile> {
    Ok(MoralProfile { subject_id: subject_id.to_string(), foundations: summarize(scores)?, by_source: BTreeMap::new() })
}

/// Like [`aggregate_profile`], adding a per-source breakdown.
pub fn build_profile(subject_id: &str, scored: &[(Source, FoundationScores)]) -> Result<MoralProfile> {
    let all: Vec<FoundationScores> = scored.iter().map(|(_, s)| *s).collect();
    let mut profile = aggregate_profile(subject_id, &all)?;
    for source in Source::ALL {
        let part: Vec<FoundationScores> = scored.iter().filter(|(s, _)| *s == source).map(|(_, s)| *s).collect();
        if !part.is_empty() {
            profile.by_source.insert(source, summarize(&part)?);
        }
    }
    Ok(profile)
}

/// Score every stored document of a subject (up to `workers` at a time)
/// and aggregate.
pub fn profile_subject(store: &CorpusStore, subject_id: &str, scorer: &dyn MoralScorer, workers: usize) -> Result<MoralProfile> {
    let docs = store.documents(subject_id)?;
    if docs.is_empty() {
        return Err(ScoreError::EmptyCorpus);
    }
    let scored = retry::bounded_map(&docs, workers, |d| score_document(&d.clean_text, scorer).map(|s| (d.source, s)));
    let scored = scored.into_iter().collect::<Result<Vec<_>>>()?;
    build_profile(subject_id, &scored)
}

pub const PROFILE_FILE: &str = "profile.json";

pub fn save_profile(store: &CorpusStore, profile: &MoralProfile) -> Result<()> {
    let path = store.subject_file(&profile.subject_id, PROFILE_FILE)?;
    crate::corpus::write_json_atomic(&path, profile)?;
    Ok(())
}

/// Previously computed profile, if any.
pub fn load_profile(store: &CorpusStore, subject_id: &str) -> Result<Option<MoralProfile>> {
    let path = store.subject_file(subject_id, PROFILE_FILE)?;
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(crate::corpus::CorpusError::Io)?;
    let profile = serde_json::from_str(&text).map_err(|source| crate::corpus::CorpusError::Corrupt { path, source })?;
    Ok(Some(profile))
}
