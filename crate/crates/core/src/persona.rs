//! Persona prompt rendering and corpus passage retrieval.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Demographics, DocumentRecord};
use crate::foundation::Foundation;
use crate::instruments::Instrument;
use crate::scaffold::{tokenize, MoralProfile};

const TPL_DEMOGRAPHICS: &str = include_str!("../assets/templates/persona_demographics.txt");
const TPL_TEXT: &str = include_str!("../assets/templates/persona_text.txt");
const TPL_MFT: &str = include_str!("../assets/templates/persona_mft.txt");
const TPL_MFT_TEXT: &str = include_str!("../assets/templates/persona_mft_text.txt");

/// Experiment details block for the MFQ-30.
pub const MFQ_HEADER: &str = include_str!("../assets/templates/header_mfq.txt");
/// Experiment details block for the sacrificial dilemma task.
pub const DILEMMA_HEADER: &str = include_str!("../assets/templates/header_dilemma.txt");

pub const DEFAULT_PASSAGES: usize = 8;
pub const CHUNK_CHARS: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PersonaError {
    #[error("{0} persona requires a moral profile")]
    MissingProfile(PersonaVersion),
    #[error("{0} persona requires demographics")]
    MissingDemographics(PersonaVersion),
    #[error("{0} persona requires at least one grounding passage")]
    MissingPassages(PersonaVersion),
    #[error("invalid sampling parameters: {0}")]
    InvalidSampling(String),
    #[error("no chunks to retrieve from")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unknown persona version {0:?}")]
    UnknownVersion(String),
}

pub type Result<T> = std::result::Result<T, PersonaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaVersion {
    DemographicsOnly,
    TextOnly,
    MftOnly,
    MftPlusText,
}

impl PersonaVersion {
    pub const ALL: [PersonaVersion; 4] =
        [PersonaVersion::DemographicsOnly, PersonaVersion::TextOnly, PersonaVersion::MftOnly, PersonaVersion::MftPlusText];

    pub fn label(self) -> &'static str {
        match self {
            PersonaVersion::DemographicsOnly => "V1: Demographics",
            PersonaVersion::TextOnly => "V2: Text",
            PersonaVersion::MftOnly => "V3: MFT",
            PersonaVersion::MftPlusText => "V4: MFT + Text",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            PersonaVersion::DemographicsOnly => "v1",
            PersonaVersion::TextOnly => "v2",
            PersonaVersion::MftOnly => "v3",
            PersonaVersion::MftPlusText => "v4",
        }
    }

    pub fn uses_profile(self) -> bool {
        matches!(self, PersonaVersion::MftOnly | PersonaVersion::MftPlusText)
    }

    pub fn uses_passages(self) -> bool {
        matches!(self, PersonaVersion::TextOnly | PersonaVersion::MftPlusText)
    }

    pub fn uses_demographics(self) -> bool {
        matches!(self, PersonaVersion::DemographicsOnly | PersonaVersion::MftOnly)
    }

    fn template(self) -> &'static str {
        match self {
            PersonaVersion::DemographicsOnly => TPL_DEMOGRAPHICS,
            PersonaVersion::TextOnly => TPL_TEXT,
            PersonaVersion::MftOnly => TPL_MFT,
            PersonaVersion::MftPlusText => TPL_MFT_TEXT,
        }
    }
}

impl fmt::Display for PersonaVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PersonaVersion {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v1" | "1" | "demographics" | "demographics_only" => Ok(PersonaVersion::DemographicsOnly),
            "v2" | "2" | "text" | "text_only" => Ok(PersonaVersion::TextOnly),
            "v3" | "3" | "mft" | "mft_only" => Ok(PersonaVersion::MftOnly),
            "v4" | "4" | "mft+text" | "mft_plus_text" => Ok(PersonaVersion::MftPlusText),
            _ => Err(PersonaError::UnknownVersion(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 1.0, top_p: 1.0, max_tokens: 512, seed: None }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(PersonaError::InvalidSampling(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PersonaError::InvalidSampling(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(PersonaError::InvalidSampling("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub subject_id: String,
    pub version: PersonaVersion,
    pub system_prompt: String,
    pub grounding_passages: Vec<String>,
    pub sampling: SamplingParams,
}

/// Inputs available for rendering one subject's persona.
#[derive(Debug, Clone, Copy)]
pub struct PersonaInputs<'a> {
    pub subject_id: &'a str,
    pub demographics: Option<&'a Demographics>,
    pub profile: Option<&'a MoralProfile>,
    pub passages: &'a [String],
}

fn or_unknown(v: Option<&str>) -> &str {
    match v {
        Some(s) if !s.trim().is_empty() => s,
        _ => "Unknown",
    }
}

fn fill_demographics(text: &str, demo: &Demographics) -> String {
    let age = demo.age.map(|a| a.to_string());
    text.replace("[Insert Age]", or_unknown(age.as_deref()))
        .replace("[Insert Gender]", or_unknown(demo.gender.as_deref()))
        .replace("[Insert Education]", or_unknown(demo.education.as_deref()))
        .replace("[Insert Professional Experience]", or_unknown(demo.professional_summary.as_deref()))
}

/// "Harm: Min: 2.45, Max: 8.80, Mean: 6.48".
pub fn foundation_line(profile: &MoralProfile, f: Foundation) -> String {
    let s = &profile.foundations[f];
    format!("{}: Min: {:.2}, Max: {:.2}, Mean: {:.2}", f.name(), s.min, s.max, s.mean)
}

fn fill_profile(text: &str, profile: &MoralProfile) -> String {
    let mut out = Vec::new();
    for line in text.split('\n') {
        let found = Foundation::ALL
            .into_iter()
            .find(|f| line.contains("[Insert Min]") && line.trim_start().trim_start_matches("- ").starts_with(&format!("{}:", f.name())));
        match found {
            Some(f) => {
                let indent = &line[..line.len() - line.trim_start().len()];
                let bullet = if line.trim_start().starts_with("- ") { "- " } else { "" };
                out.push(format!("{indent}{bullet}{}", foundation_line(profile, f)));
            }
            None => out.push(line.to_string()),
        }
    }
    out.join("\n")
}

fn format_passages(passages: &[String]) -> String {
    passages.iter().enumerate().map(|(i, p)| format!("[{}] {}", i + 1, p)).collect::<Vec<_>>().join("\n\n")
}

/// Fill the version's template and append the instrument header verbatim.
pub fn render_prompt(
    version: PersonaVersion,
    inputs: &PersonaInputs<'_>,
    instrument_header: &str,
    sampling: SamplingParams,
) -> Result<PersonaSpec> {
    sampling.validate()?;
    let mut text = version.template().to_string();
    if version.uses_profile() {
        let profile = inputs.profile.ok_or(PersonaError::MissingProfile(version))?;
        text = fill_profile(&text, profile);
    }
    if version.uses_demographics() {
        let demo = inputs.demographics.ok_or(PersonaError::MissingDemographics(version))?;
        text = fill_demographics(&text, demo);
    }
    let grounding_passages = if version.uses_passages() {
        if inputs.passages.is_empty() {
            return Err(PersonaError::MissingPassages(version));
        }
        text = text.replace("[Insert Passages]", &format_passages(inputs.passages));
        inputs.passages.to_vec()
    } else {
        Vec::new()
    };
    let mut system_prompt = text.trim_end().to_string();
    system_prompt.push_str("\n\n");
    system_prompt.push_str(instrument_header.trim_end());
    system_prompt.push('\n');
    Ok(PersonaSpec { subject_id: inputs.subject_id.to_string(), version, system_prompt, grounding_passages, sampling })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    /// Byte offset of the chunk within the document's clean text.
    pub offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

/// Byte spans of sentences: a sentence ends after `.`, `!` or `?` followed
/// by a space.
fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let b = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 0..b.len() {
        if matches!(b[i], b'.' | b'!' | b'?') && b.get(i + 1) == Some(&b' ') {
            spans.push((start, i + 1));
            start = i + 2;
        }
    }
    if start < b.len() {
        spans.push((start, b.len()));
    }
    spans
}

/// Split an over-long span at whitespace (or a char boundary) so each
/// piece has at most `max` bytes.
fn split_long(text: &str, (mut s, e): (usize, usize), max: usize, out: &mut Vec<(usize, usize)>) {
    while e - s > max {
        let mut cut = s + max;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        let piece = &text[s..cut];
        let cut = match piece.rfind(' ') {
            Some(p) if p > 0 => s + p,
            _ => cut,
        };
        out.push((s, cut));
        s = cut;
        while s < e && text.as_bytes()[s] == b' ' {
            s += 1;
        }
    }
    if s < e {
        out.push((s, e));
    }
}

/// Cut a document into windows of at most `max_chars` bytes on sentence
/// boundaries.
pub fn chunk_document(doc: &DocumentRecord, max_chars: usize) -> Vec<Chunk> {
    let text = &doc.clean_text;
    let mut pieces = Vec::new();
    for span in sentence_spans(text) {
        split_long(text, span, max_chars.max(1), &mut pieces);
    }
    let mut chunks = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for (s, e) in pieces {
        current = match current {
            Some((cs, ce)) if e - cs <= max_chars => Some((cs, e.max(ce))),
            Some(done) => {
                chunks.push(done);
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    chunks.extend(current);
    chunks
        .into_iter()
        .filter(|(s, e)| !text[*s..*e].trim().is_empty())
        .map(|(s, e)| Chunk { doc_id: doc.doc_id.clone(), offset: s, text: text[s..e].to_string() })
        .collect()
}

/// Chunks for a subject's documents, ordered by (doc_id, offset).
pub fn chunk_corpus(docs: &[DocumentRecord], max_chars: usize) -> Vec<Chunk> {
    let mut chunks: Vec<Chunk> = docs.iter().flat_map(|d| chunk_document(d, max_chars)).collect();
    chunks.sort_by(|a, b| (&a.doc_id, a.offset).cmp(&(&b.doc_id, b.offset)));
    chunks
}

/// Rank chunks by tf-idf overlap with the query and return the top `k`.
/// Ties (including all-zero scores) fall back to (doc_id, offset) order.
pub fn retrieve_passages(chunks: &[Chunk], query: &str, k: usize) -> Result<Vec<ScoredChunk>> {
    if k == 0 {
        return Err(PersonaError::InvalidK);
    }
    if chunks.is_empty() {
        return Err(PersonaError::EmptyCorpus);
    }
    let terms: BTreeSet<String> = tokenize(query).collect();
    let tfs: Vec<HashMap<String, usize>> = chunks
        .iter()
        .map(|c| {
            let mut tf = HashMap::new();
            for t in tokenize(&c.text) {
                if terms.contains(&t) {
                    *tf.entry(t).or_insert(0) += 1;
                }
            }
            tf
        })
        .collect();
    let n = chunks.len() as f64;
    let idf: HashMap<&String, f64> = terms
        .iter()
        .map(|t| {
            let df = tfs.iter().filter(|tf| tf.contains_key(t)).count() as f64;
            (t, ((n + 1.0) / (df + 1.0)).ln() + 1.0)
        })
        .collect();
    let mut scored: Vec<ScoredChunk> = chunks
        .iter()
        .zip(&tfs)
        .map(|(c, tf)| ScoredChunk {
            chunk: c.clone(),
            score: terms.iter().map(|t| *tf.get(t).unwrap_or(&0) as f64 * idf[t]).sum(),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (&a.chunk.doc_id, a.chunk.offset).cmp(&(&b.chunk.doc_id, b.chunk.offset)))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Retrieval query for an instrument: its item texts joined.
pub fn instrument_query(instrument: &Instrument) -> String {
    instrument.items.iter().map(|i| i.text.as_str()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::foundation::PerFoundation;
    use crate::scaffold::aggregate_profile;
    use proptest::prelude::*;

    fn demo() -> Demographics {
        Demographics {
            subject_id: "ceo5".into(),
            age: Some(55),
            gender: Some("F".into()),
            education: Some("MBA".into()),
            professional_summary: None,
        }
    }

    fn profile() -> MoralProfile {
        // harm: min 2.45, max 8.80, mean 6.48
        let harm = [2.45, 8.2, 8.8, 6.47];
        let docs: Vec<_> = harm.iter().map(|&h| PerFoundation { harm: h, ..PerFoundation::splat(5.5) }).collect();
        aggregate_profile("ceo5", &docs).unwrap()
    }

    fn doc(id: &str, text: &str) -> DocumentRecord {
        DocumentRecord {
            doc_id: id.into(),
            subject_id: "s".into(),
            source: Source::News,
            year: 2020,
            raw_text: text.into(),
            clean_text: text.into(),
        }
    }

    fn inputs<'a>(d: Option<&'a Demographics>, p: Option<&'a MoralProfile>, passages: &'a [String]) -> PersonaInputs<'a> {
        PersonaInputs { subject_id: "ceo5", demographics: d, profile: p, passages }
    }

    fn number_tokens(s: &str) -> usize {
        s.split(|c: char| !(c.is_ascii_digit() || c == '.'))
            .filter(|t| t.len() >= 4 && t.contains('.') && t.chars().next().unwrap().is_ascii_digit())
            .count()
    }

    #[test]
    fn mft_only_prompt() {
        let (d, p) = (demo(), profile());
        let spec = render_prompt(PersonaVersion::MftOnly, &inputs(Some(&d), Some(&p), &[]), MFQ_HEADER, SamplingParams::default()).unwrap();
        assert!(spec.system_prompt.contains("- Harm: Min: 2.45, Max: 8.80, Mean: 6.48"), "{}", spec.system_prompt);
        assert!(spec.system_prompt.contains("Age: 55"));
        assert!(spec.system_prompt.contains("Professional Experience: Unknown"));
        assert!(!spec.system_prompt.contains("[Insert"));
        assert!(spec.system_prompt.ends_with("emotional impact of actions when making moral judgments.\n"));
        assert!(spec.grounding_passages.is_empty());
        for f in Foundation::ALL {
            assert!(spec.system_prompt.contains(&foundation_line(&p, f)));
        }
    }

    #[test]
    fn demographics_only_prompt() {
        let d = demo();
        let spec = render_prompt(PersonaVersion::DemographicsOnly, &inputs(Some(&d), None, &[]), MFQ_HEADER, SamplingParams::default()).unwrap();
        assert!(spec.system_prompt.contains("Age: 55"));
        assert!(spec.system_prompt.contains("Gender: F"));
        assert!(!spec.system_prompt.contains("Min:"));
        assert_eq!(number_tokens(&spec.system_prompt), 0);
    }

    #[test]
    fn version_preconditions() {
        let (d, p) = (demo(), profile());
        let s = SamplingParams::default();
        assert_eq!(
            render_prompt(PersonaVersion::TextOnly, &inputs(Some(&d), Some(&p), &[]), MFQ_HEADER, s),
            Err(PersonaError::MissingPassages(PersonaVersion::TextOnly))
        );
        assert_eq!(
            render_prompt(PersonaVersion::MftOnly, &inputs(Some(&d), None, &[]), MFQ_HEADER, s),
            Err(PersonaError::MissingProfile(PersonaVersion::MftOnly))
        );
        assert_eq!(
            render_prompt(PersonaVersion::DemographicsOnly, &inputs(None, Some(&p), &[]), MFQ_HEADER, s),
            Err(PersonaError::MissingDemographics(PersonaVersion::DemographicsOnly))
        );
        let bad = SamplingParams { top_p: 0.0, ..s };
        assert!(matches!(
            render_prompt(PersonaVersion::DemographicsOnly, &inputs(Some(&d), None, &[]), MFQ_HEADER, bad),
            Err(PersonaError::InvalidSampling(_))
        ));
    }

    #[test]
    fn text_versions_inline_passages() {
        let p = profile();
        let passages = vec!["We protect our people.".to_string(), "Loyalty matters.".to_string()];
        let spec = render_prompt(PersonaVersion::MftPlusText, &inputs(None, Some(&p), &passages), DILEMMA_HEADER, SamplingParams::default()).unwrap();
        assert!(spec.system_prompt.contains("[1] We protect our people.\n\n[2] Loyalty matters."));
        assert!(spec.system_prompt.contains("Mean: 6.48"));
        assert!(spec.system_prompt.contains("Sacrificial Dilemma Moral Judgment Task"));
        assert_eq!(spec.grounding_passages, passages);
        let spec = render_prompt(PersonaVersion::TextOnly, &inputs(None, None, &passages), MFQ_HEADER, SamplingParams::default()).unwrap();
        assert!(spec.system_prompt.contains("Give rationale with both the MFT score and the file search option"));
        assert!(!spec.system_prompt.contains("Min:"));
    }

    #[test]
    fn version_parsing() {
        assert_eq!("V3".parse::<PersonaVersion>().unwrap(), PersonaVersion::MftOnly);
        assert_eq!("mft+text".parse::<PersonaVersion>().unwrap(), PersonaVersion::MftPlusText);
        assert!("v5".parse::<PersonaVersion>().is_err());
    }

    #[test]
    fn chunking_respects_limit_and_sentences() {
        let sentence = "The board met to discuss strategy. ";
        let text = sentence.repeat(80);
        let d = doc("a", text.trim());
        let chunks = chunk_document(&d, CHUNK_CHARS);
        assert!(chunks.len() >= 2);
        for c in &chunks {
            assert!(c.text.len() <= CHUNK_CHARS);
            assert!(c.text.ends_with('.'));
            assert_eq!(&d.clean_text[c.offset..c.offset + c.text.len()], c.text);
        }
        let long_word_doc = doc("b", &"x".repeat(2500));
        let parts = chunk_document(&long_word_doc, CHUNK_CHARS);
        assert_eq!(parts.iter().map(|c| c.text.len()).collect::<Vec<_>>(), vec![1000, 1000, 500]);
    }

    #[test]
    fn retrieval_oracle_two_chunks() {
        let chunks = vec![
            Chunk { doc_id: "a".into(), offset: 0, text: "growth matters here".into() },
            Chunk { doc_id: "b".into(), offset: 0, text: "growth growth beyond".into() },
        ];
        // tf-idf by hand: df(growth) = 2, N = 2, idf = ln(3/3) + 1 = 1
        let oracle = [1.0 * 1.0, 2.0 * 1.0];
        let r = retrieve_passages(&chunks, "growth", 2).unwrap();
        assert_eq!(r[0].chunk.doc_id, "b");
        assert_eq!((r[0].score, r[1].score), (oracle[1], oracle[0]));
    }

    #[test]
    fn retrieval_ties_and_saturation() {
        let chunks = chunk_corpus(&[doc("b", "Second doc."), doc("a", "First doc. Another sentence.")], CHUNK_CHARS);
        let r = retrieve_passages(&chunks, "nothing matches", 10).unwrap();
        assert_eq!(r.len(), chunks.len());
        assert!(r.iter().all(|s| s.score == 0.0));
        assert_eq!(r[0].chunk.doc_id, "a");
        assert_eq!(retrieve_passages(&[], "q", 3), Err(PersonaError::EmptyCorpus));
        assert_eq!(retrieve_passages(&chunks, "q", 0), Err(PersonaError::InvalidK));
    }

    proptest! {
        #[test]
        fn retrieval_monotone_in_k(
            texts in prop::collection::vec("[a-e ]{1,60}", 1..8),
            query in "[a-e ]{0,20}",
            k in 1usize..8,
        ) {
            let docs: Vec<DocumentRecord> = texts.iter().enumerate().map(|(i, t)| doc(&format!("d{i}"), t)).collect();
            let chunks = chunk_corpus(&docs, 40);
            prop_assume!(!chunks.is_empty());
            let small = retrieve_passages(&chunks, &query, k).unwrap();
            let big = retrieve_passages(&chunks, &query, k + 1).unwrap();
            prop_assert_eq!(&big[..small.len()], &small[..]);
        }

        #[test]
        fn rendering_deterministic(mean in 0.0f64..10.0) {
            let p = MoralProfile::constant("x", PerFoundation::splat(mean));
            let d = demo();
            let i = inputs(Some(&d), Some(&p), &[]);
            let a = render_prompt(PersonaVersion::MftOnly, &i, MFQ_HEADER, SamplingParams::default()).unwrap();
            let b = render_prompt(PersonaVersion::MftOnly, &i, MFQ_HEADER, SamplingParams::default()).unwrap();
            prop_assert_eq!(a.system_prompt.as_bytes(), b.system_prompt.as_bytes());
            prop_assert_eq!(a.system_prompt.matches("Min: ").count(), 5);
        }
    }
}
