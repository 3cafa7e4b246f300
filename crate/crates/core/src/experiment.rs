//! Orchestration of questionnaire administration, replication and the
//! comparison analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, CorpusStore, Demographics};
use crate::foundation::{Foundation, PerFoundation};
use crate::gateway::{
    BackendKind, CompletionBackend, CompletionRequest, Condition, GatewayError, ScriptCue, ScriptedBackend,
};
use crate::instruments::{
    dilemmas, mfq, parse_rating, score_dilemmas, score_mfq_with, Instrument, InstrumentError, InstrumentItem, InstrumentResponse,
    MfqScore, Part, SacrificeScore,
};
use crate::persona::{
    chunk_corpus, foundation_line, instrument_query, render_prompt, retrieve_passages, PersonaError, PersonaInputs,
    PersonaSpec, PersonaVersion, SamplingParams, CHUNK_CHARS, DEFAULT_PASSAGES, DILEMMA_HEADER, MFQ_HEADER,
};
use crate::retry;
use crate::scaffold::{load_profile, MoralProfile, ScoreError};
use crate::stats::{
    self, bias_loa, chow_df2, coef_diff_f, fisher_z_diff, ols_standardized, pearson, ridge_standardized, stability_summary,
    RegressionResult, StabilitySummary, StatsError,
};

const BENCHMARK_JSON: &str = include_str!("../assets/human_benchmark.json");

/// Follow-up sent once when a reply has no readable rating.
pub const REPROMPT: &str = "Answer with the numeric rating only.";
pub const REPORT_FILE: &str = "report.json";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no moral profile for subject {0}")]
    MissingProfile(String),
    #[error("{context}: need at least {needed} complete subjects, got {got}")]
    InsufficientSubjects { context: String, needed: usize, got: usize },
    #[error("dilemma item {0} has no foundation tag")]
    UntaggedItem(u32),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    Mfq30,
    SacrificialDilemmas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub subjects: Vec<String>,
    pub versions: BTreeSet<PersonaVersion>,
    pub instrument: InstrumentKind,
    pub condition: Condition,
    pub runs: u32,
    pub backend: BackendKind,
    pub sampling: SamplingParams,
    pub output_dir: PathBuf,
    pub k_passages: usize,
    pub ridge_lambda: f64,
    pub workers: usize,
}

impl ExperimentConfig {
    /// MFQ administration across all four persona versions, one run.
    pub fn phase2(subjects: Vec<String>, backend: BackendKind) -> Self {
        ExperimentConfig {
            subjects,
            versions: PersonaVersion::ALL.into_iter().collect(),
            instrument: InstrumentKind::Mfq30,
            condition: Condition::NotApplicable,
            runs: 1,
            backend,
            sampling: SamplingParams::default(),
            output_dir: PathBuf::from("phase2"),
            k_passages: DEFAULT_PASSAGES,
            ridge_lambda: 1.0,
            workers: 8,
        }
    }

    /// Dilemmas plus MFQ on MFT-only personas, five runs.
    pub fn phase3(subjects: Vec<String>, condition: Condition, backend: BackendKind) -> Self {
        ExperimentConfig {
            versions: [PersonaVersion::MftOnly].into_iter().collect(),
            instrument: InstrumentKind::SacrificialDilemmas,
            condition,
            runs: 5,
            output_dir: PathBuf::from("phase3"),
            ..ExperimentConfig::phase2(subjects, backend)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.subjects.is_empty() {
            return bad("no subjects listed");
        }
        let unique: BTreeSet<&String> = self.subjects.iter().collect();
        if unique.len() != self.subjects.len() {
            return bad("subject list contains duplicates");
        }
        if self.versions.is_empty() {
            return bad("no persona versions selected");
        }
        match (self.instrument, self.condition) {
            (InstrumentKind::SacrificialDilemmas, Condition::NotApplicable) => {
                return bad("dilemmas need a condition (isolated or integrated)")
            }
            (InstrumentKind::Mfq30, Condition::TraitIsolated | Condition::IntegratedTrait) => {
                return bad("a prompting condition only applies to the dilemma task")
            }
            _ => {}
        }
        if self.k_passages == 0 {
            return bad("k_passages must be at least 1");
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return bad("ridge_lambda must be a finite non-negative number");
        }
        self.sampling.validate()?;
        Ok(())
    }

    fn run_sampling(&self, run_index: u32) -> SamplingParams {
        SamplingParams { seed: self.sampling.seed.map(|s| s.wrapping_add(u64::from(run_index - 1))), ..self.sampling }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanBenchmark {
    pub source: String,
    pub version: u32,
    pub n: usize,
    pub predictors: usize,
    pub r: PerFoundation<f64>,
    pub beta: PerFoundation<f64>,
    pub se: PerFoundation<f64>,
}

impl HumanBenchmark {
    pub fn bundled() -> Self {
        Self::from_json(BENCHMARK_JSON).expect("bundled benchmark is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let b: HumanBenchmark = serde_json::from_str(json)?;
        if b.n <= 3 || b.predictors == 0 {
            return Err(ExperimentError::Config("benchmark needs n > 3 and at least one predictor".into()));
        }
        Ok(b)
    }
}

/// Everything persona rendering needs for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMaterial {
    pub subject_id: String,
    pub demographics: Option<Demographics>,
    pub profile: Option<MoralProfile>,
    pub passages: Vec<String>,
}

impl SubjectMaterial {
    /// Load demographics, the stored profile and the top-`k` passages for
    /// `query` from the corpus store.
    pub fn load(store: &CorpusStore, subject_id: &str, query: &str, k: usize) -> Result<Self> {
        let docs = store.documents(subject_id)?;
        let chunks = chunk_corpus(&docs, CHUNK_CHARS);
        let passages = if chunks.is_empty() {
            Vec::new()
        } else {
            retrieve_passages(&chunks, query, k)?.into_iter().map(|s| s.chunk.text).collect()
        };
        Ok(SubjectMaterial {
            subject_id: subject_id.to_string(),
            demographics: store.demographics(subject_id)?,
            profile: load_profile(store, subject_id)?,
            passages,
        })
    }
}

impl SubjectMaterial {
    /// Subject with a constant profile (min = max = mean), generic
    /// demographics and no passages.
    pub fn synthetic(subject_id: &str, means: PerFoundation<f64>) -> Self {
        SubjectMaterial {
            subject_id: subject_id.to_string(),
            demographics: Some(Demographics {
                subject_id: subject_id.to_string(),
                age: Some(50),
                gender: None,
                education: None,
                professional_summary: Some("Chief executive officer".into()),
            }),
            profile: Some(MoralProfile::constant(subject_id, means)),
            passages: Vec::new(),
        }
    }
}

pub fn instrument_for(kind: InstrumentKind) -> Instrument {
    match kind {
        InstrumentKind::Mfq30 => mfq(),
        InstrumentKind::SacrificialDilemmas => dilemmas(),
    }
}

pub fn load_materials(store: &CorpusStore, config: &ExperimentConfig) -> Result<Vec<SubjectMaterial>> {
    let query = instrument_query(&mfq());
    config.subjects.iter().map(|s| SubjectMaterial::load(store, s, &query, config.k_passages)).collect()
}

/// Scripted backend bound to every subject's profile means.
pub fn scripted_backend(materials: &[SubjectMaterial]) -> ScriptedBackend {
    ScriptedBackend::new(materials.iter().filter_map(|m| Some((m.subject_id.clone(), m.profile.as_ref()?.means()))).collect())
}

const ANSWER_FORMAT: &str = "Reply in this format:\nResponse: (<rating>) <label>\nRationale: <one or two sentences>";

fn scale_block(part: Part) -> String {
    part.labels().join("\n")
}

/// User message for one MFQ item.
pub fn item_user_message(item: &InstrumentItem) -> String {
    let lead = match item.part {
        Part::Relevance => {
            "When you decide whether something is right or wrong, to what extent is the following consideration relevant to your thinking? Please rate it using this scale:"
        }
        Part::Agreement => "Please read the following sentence and indicate your agreement or disagreement:",
        Part::Dilemma => "Please judge the moral acceptability of the action in this dilemma:",
    };
    format!("{lead}\n\n{}\n\nQuestion: {}\n\n{ANSWER_FORMAT}", scale_block(item.part), item.text)
}

/// User message for one dilemma under a prompting condition.
pub fn build_condition_prompt(condition: Condition, item: &InstrumentItem, profile: &MoralProfile) -> Result<String> {
    let guidance = match condition {
        Condition::TraitIsolated => {
            let f = item.scored_foundation().ok_or(ExperimentError::UntaggedItem(item.item_id))?;
            format!(
                "Answer solely on the basis of your {} score ({:.2}). Do not draw on any other trait score.",
                f.name(),
                profile.foundations[f].mean
            )
        }
        Condition::IntegratedTrait => {
            let lines: Vec<String> = Foundation::ALL.into_iter().map(|f| format!("- {}", foundation_line(profile, f))).collect();
            format!("Draw on the full set of your moral foundation scores:\n{}", lines.join("\n"))
        }
        Condition::NotApplicable => {
            return Err(ExperimentError::Config("dilemmas need a prompting condition".into()));
        }
    };
    let title = item.title.as_deref().unwrap_or("Dilemma");
    Ok(format!(
        "{guidance}\n\nDilemma: {title}\n{}\n\n{}\n\n{ANSWER_FORMAT}",
        item.text,
        scale_block(Part::Dilemma)
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<PersonaVersion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_index: Option<u32>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject_id: String,
    pub version: PersonaVersion,
    pub mfq_responses: Vec<InstrumentResponse>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dilemma_responses: Vec<InstrumentResponse>,
    pub mfq: MfqScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sacrifice: Option<SacrificeScore>,
    pub completions: u32,
    pub reprompts: u32,
}

/// Raw material of one stochastic run. Carries wall-clock timestamps, so it
/// is kept apart from the deterministic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: u32,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub config: ExperimentConfig,
    pub results: Vec<SubjectResult>,
    pub excluded: Vec<Exclusion>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

struct Question {
    item: InstrumentItem,
    user_message: String,
    condition: Condition,
}

struct Job {
    subject_id: String,
    persona: PersonaSpec,
    questions: Vec<Question>,
}

#[derive(Default)]
struct JobOutcome {
    responses: Vec<InstrumentResponse>,
    failure: Option<String>,
    completions: u32,
    reprompts: u32,
}

enum Answer {
    Rated(InstrumentResponse, u32, bool),
    Unreadable(String, u32),
}

fn request_for(job: &Job, q: &Question, user_message: String, backend: BackendKind) -> CompletionRequest {
    CompletionRequest {
        system_prompt: job.persona.system_prompt.clone(),
        user_message,
        sampling: job.persona.sampling,
        backend,
        cue: (backend == BackendKind::Scripted).then(|| ScriptCue {
            subject_id: job.subject_id.clone(),
            item: q.item.clone(),
            condition: q.condition,
        }),
    }
}

fn ask(backend: &dyn CompletionBackend, job: &Job, q: &Question) -> std::result::Result<Answer, GatewayError> {
    let first = backend.complete(&request_for(job, q, q.user_message.clone(), backend.kind()))?;
    let mut completions = 1;
    let mut text = first.text;
    let mut reprompted = false;
    let parsed = match parse_rating(&text, q.item.scale()) {
        Ok(p) => p,
        Err(first_err) => {
            log::debug!("{} item {}: {first_err}; re-prompting", job.subject_id, q.item.item_id);
            let follow_up = format!("{}\n\n{REPROMPT}", q.user_message);
            text = backend.complete(&request_for(job, q, follow_up, backend.kind()))?.text;
            completions += 1;
            reprompted = true;
            match parse_rating(&text, q.item.scale()) {
                Ok(p) => p,
                Err(e) => return Ok(Answer::Unreadable(format!("item {}: {e}", q.item.item_id), completions)),
            }
        }
    };
    let response =
        InstrumentResponse { item_id: q.item.item_id, rating: parsed.rating, rationale: parsed.rationale, raw_text: text };
    Ok(Answer::Rated(response, completions, reprompted))
}

/// Administer every job's questions through the bounded pool. Auth
/// failures abort; other per-item failures mark the job as failed.
fn administer(backend: &dyn CompletionBackend, jobs: &[Job], workers: usize) -> Result<Vec<JobOutcome>> {
    let tasks: Vec<(usize, usize)> =
        jobs.iter().enumerate().flat_map(|(j, job)| (0..job.questions.len()).map(move |q| (j, q))).collect();
    let answers = retry::bounded_map(&tasks, workers, |&(j, q)| ask(backend, &jobs[j], &jobs[j].questions[q]));
    let mut outcomes: Vec<JobOutcome> = jobs.iter().map(|_| JobOutcome::default()).collect();
    for (&(j, _), answer) in tasks.iter().zip(answers) {
        let out = &mut outcomes[j];
        match answer {
            Ok(Answer::Rated(r, n, reprompted)) => {
                out.responses.push(r);
                out.completions += n;
                out.reprompts += u32::from(reprompted);
            }
            Ok(Answer::Unreadable(reason, n)) => {
                out.completions += n;
                out.reprompts += 1;
                out.failure.get_or_insert(reason);
            }
            Err(e @ GatewayError::AuthError(_)) => return Err(e.into()),
            Err(e) => {
                out.failure.get_or_insert(e.to_string());
            }
        }
    }
    Ok(outcomes)
}

fn require_profiles(materials: &[SubjectMaterial]) -> Result<()> {
    match materials.iter().find(|m| m.profile.is_none()) {
        Some(m) => Err(ExperimentError::MissingProfile(m.subject_id.clone())),
        None => Ok(()),
    }
}

fn persona_for(
    material: &SubjectMaterial,
    version: PersonaVersion,
    header: &str,
    sampling: SamplingParams,
) -> std::result::Result<PersonaSpec, PersonaError> {
    let unknown = Demographics { subject_id: material.subject_id.clone(), ..Demographics::default() };
    let demographics = match (&material.demographics, version) {
        (Some(d), _) => Some(d),
        (None, PersonaVersion::DemographicsOnly) => None,
        (None, _) => Some(&unknown),
    };
    let inputs = PersonaInputs {
        subject_id: &material.subject_id,
        demographics,
        profile: material.profile.as_ref(),
        passages: &material.passages,
    };
    render_prompt(version, &inputs, header, sampling)
}

fn mfq_questions(instrument: &Instrument) -> Vec<Question> {
    instrument
        .items
        .iter()
        .map(|item| Question { item: item.clone(), user_message: item_user_message(item), condition: Condition::NotApplicable })
        .collect()
}

fn check_materials(config: &ExperimentConfig, materials: &[SubjectMaterial], backend: &dyn CompletionBackend) -> Result<()> {
    config.validate()?;
    let ids: Vec<&str> = materials.iter().map(|m| m.subject_id.as_str()).collect();
    let wanted: Vec<&str> = config.subjects.iter().map(String::as_str).collect();
    if ids != wanted {
        return Err(ExperimentError::Config("materials do not match the configured subject list".into()));
    }
    if backend.kind() != config.backend {
        return Err(ExperimentError::Config("backend kind differs from the configuration".into()));
    }
    require_profiles(materials)
}

/// Result of an experiment: the deterministic report plus per-run raw
/// records.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: AnalysisReport,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum AnalysisReport {
    Phase2(Phase2Report),
    Phase3(Box<Phase3Report>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub version: PersonaVersion,
    pub foundation: Foundation,
    pub n: usize,
    pub md: f64,
    pub var: f64,
    /// None when either series is constant.
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScores {
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<PersonaVersion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smas: Option<f64>,
    /// Normalized 0-10 MFQ scores.
    pub mfq: PerFoundation<f64>,
    /// Text-derived profile means.
    pub mft: PerFoundation<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Report {
    pub runs: u32,
    pub backend: BackendKind,
    pub rows: Vec<AgreementRow>,
    pub subjects: Vec<SubjectScores>,
    pub excluded: Vec<Exclusion>,
}

/// One row of a descriptive table: outcome first, then the five foundations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTable {
    pub run_index: u32,
    pub n: usize,
    pub rows: Vec<TableRow>,
    /// Full symmetric matrix in row order.
    pub correlations: Vec<Vec<f64>>,
    pub ols: RegressionResult,
    pub ridge: RegressionResult,
    pub subjects: Vec<SubjectScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTable {
    pub runs: usize,
    pub rows: Vec<TableRow>,
    pub correlations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub run_index: u32,
    pub predictor: Foundation,
    pub beta_ols: f64,
    pub beta_ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub ols: StabilitySummary,
    pub ridge: StabilitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub run_index: u32,
    pub r2_ols: f64,
    pub r2_ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherRow {
    pub foundation: Foundation,
    pub r_llm: f64,
    pub r_human: f64,
    pub z: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChowRow {
    pub foundation: Foundation,
    pub beta_human: f64,
    pub se_human: f64,
    pub beta_llm: f64,
    pub se_llm: f64,
    pub delta: f64,
    pub f: Option<f64>,
    pub p: Option<f64>,
    pub df2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase3Report {
    pub condition: Condition,
    pub runs: u32,
    pub backend: BackendKind,
    pub ridge_lambda: f64,
    /// Smallest complete-subject count over runs; used for benchmark tests.
    pub n_llm: usize,
    pub run_tables: Vec<RunTable>,
    pub averaged: AveragedTable,
    pub coefficients: Vec<CoefficientRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<Stability>,
    pub fit: Vec<FitRow>,
    pub fisher: Vec<FisherRow>,
    pub chow: Vec<ChowRow>,
    pub benchmark: HumanBenchmark,
    pub excluded: Vec<Exclusion>,
}

pub const OUTCOME_LABEL: &str = "Sacrifice Rating";

fn exclusion(subject_id: &str, version: PersonaVersion, run_index: u32, reason: impl Into<String>) -> Exclusion {
    Exclusion { subject_id: subject_id.to_string(), version: Some(version), run_index: Some(run_index), reason: reason.into() }
}

/// Administer the MFQ to every requested persona version and compare the
/// recovered scores with the text-derived profile.
pub fn run_phase2(config: &ExperimentConfig, materials: &[SubjectMaterial], backend: &dyn CompletionBackend) -> Result<Outcome> {
    check_materials(config, materials, backend)?;
    if config.instrument != InstrumentKind::Mfq30 {
        return Err(ExperimentError::Config("phase 2 administers the MFQ".into()));
    }
    let instrument = mfq();
    let mut records = Vec::new();
    for run_index in 1..=config.runs {
        let started = now_ms();
        let sampling = config.run_sampling(run_index);
        let mut jobs = Vec::new();
        let mut job_versions = Vec::new();
        let mut excluded = Vec::new();
        for &version in &config.versions {
            for m in materials {
                match persona_for(m, version, MFQ_HEADER, sampling) {
                    Ok(persona) => {
                        jobs.push(Job { subject_id: m.subject_id.clone(), persona, questions: mfq_questions(&instrument) });
                        job_versions.push(version);
                    }
                    Err(e) => excluded.push(exclusion(&m.subject_id, version, run_index, e.to_string())),
                }
            }
        }
        let outcomes = administer(backend, &jobs, config.workers)?;
        let mut results = Vec::new();
        for ((job, version), out) in jobs.iter().zip(job_versions).zip(outcomes) {
            if let Some(reason) = out.failure {
                excluded.push(exclusion(&job.subject_id, version, run_index, reason));
                continue;
            }
            let score = score_mfq_with(&instrument, &out.responses)?;
            results.push(SubjectResult {
                subject_id: job.subject_id.clone(),
                version,
                mfq_responses: out.responses,
                dilemma_responses: Vec::new(),
                mfq: score,
                sacrifice: None,
                completions: out.completions,
                reprompts: out.reprompts,
            });
        }
        records.push(RunRecord {
            run_index,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            config: config.clone(),
            results,
            excluded,
        });
    }
    let report = analyze_phase2(config, materials, &records)?;
    Ok(Outcome { report: AnalysisReport::Phase2(report), records })
}

/// Average each subject's normalized MFQ scores over the runs in which the
/// subject is complete; subjects missing from any run are dropped.
fn complete_means(records: &[RunRecord], version: PersonaVersion, subject_id: &str) -> Option<PerFoundation<f64>> {
    let mut sum = PerFoundation::splat(0.0);
    for rec in records {
        let r = rec.results.iter().find(|r| r.version == version && r.subject_id == subject_id)?;
        for f in Foundation::ALL {
            sum[f] += r.mfq.normalized[f];
        }
    }
    Some(sum.map(|_, v| v / records.len() as f64))
}

pub fn analyze_phase2(config: &ExperimentConfig, materials: &[SubjectMaterial], records: &[RunRecord]) -> Result<Phase2Report> {
    let mut rows = Vec::new();
    let mut subjects = Vec::new();
    for &version in &config.versions {
        let mut pairs = Vec::new();
        for m in materials {
            let profile = m.profile.as_ref().ok_or_else(|| ExperimentError::MissingProfile(m.subject_id.clone()))?;
            if let Some(mfq) = complete_means(records, version, &m.subject_id) {
                pairs.push((mfq, profile.means()));
                subjects.push(SubjectScores {
                    subject_id: m.subject_id.clone(),
                    version: Some(version),
                    smas: None,
                    mfq,
                    mft: profile.means(),
                });
            }
        }
        if pairs.len() < 3 {
            return Err(ExperimentError::InsufficientSubjects { context: version.label().into(), needed: 3, got: pairs.len() });
        }
        for f in Foundation::ALL {
            let x: Vec<f64> = pairs.iter().map(|(q, _)| q[f]).collect();
            let y: Vec<f64> = pairs.iter().map(|(_, t)| t[f]).collect();
            let agreement = bias_loa(&x, &y)?;
            let corr = match pearson(&x, &y) {
                Ok(c) => Some(c),
                Err(StatsError::DegenerateSeries) => None,
                Err(e) => return Err(e.into()),
            };
            rows.push(AgreementRow {
                version,
                foundation: f,
                n: agreement.n,
                md: agreement.md,
                var: agreement.var,
                r: corr.map(|c| c.r),
                p: corr.map(|c| c.p),
                bias: agreement.bias,
                loa_low: agreement.loa_low,
                loa_high: agreement.loa_high,
            });
        }
    }
    let excluded = records.iter().flat_map(|r| r.excluded.iter().cloned()).collect();
    Ok(Phase2Report { runs: config.runs, backend: config.backend, rows, subjects, excluded })
}

/// Dilemmas plus MFQ on MFT-only personas, repeated `runs` times, with
/// per-run and averaged analyses and the benchmark comparison.
pub fn run_phase3(config: &ExperimentConfig, materials: &[SubjectMaterial], backend: &dyn CompletionBackend) -> Result<Outcome> {
    run_phase3_with(config, materials, backend, &HumanBenchmark::bundled())
}

pub fn run_phase3_with(
    config: &ExperimentConfig,
    materials: &[SubjectMaterial],
    backend: &dyn CompletionBackend,
    benchmark: &HumanBenchmark,
) -> Result<Outcome> {
    check_materials(config, materials, backend)?;
    if config.instrument != InstrumentKind::SacrificialDilemmas {
        return Err(ExperimentError::Config("phase 3 administers the dilemmas".into()));
    }
    let version = PersonaVersion::MftOnly;
    let questionnaire = mfq();
    let dilemma_set = dilemmas();
    let dilemma_questions = |profile: &MoralProfile| -> Result<Vec<Question>> {
        dilemma_set
            .items
            .iter()
            .map(|item| {
                Ok(Question {
                    item: item.clone(),
                    user_message: build_condition_prompt(config.condition, item, profile)?,
                    condition: config.condition,
                })
            })
            .collect()
    };
    let mut records = Vec::new();
    for run_index in 1..=config.runs {
        let started = now_ms();
        let sampling = config.run_sampling(run_index);
        let mut jobs = Vec::new();
        let mut excluded = Vec::new();
        for m in materials {
            let profile = m.profile.as_ref().expect("profiles checked");
            let personas = persona_for(m, version, MFQ_HEADER, sampling)
                .and_then(|p| Ok((p, persona_for(m, version, DILEMMA_HEADER, sampling)?)));
            match personas {
                Ok((mfq_persona, dilemma_persona)) => {
                    jobs.push(Job { subject_id: m.subject_id.clone(), persona: mfq_persona, questions: mfq_questions(&questionnaire) });
                    jobs.push(Job {
                        subject_id: m.subject_id.clone(),
                        persona: dilemma_persona,
                        questions: dilemma_questions(profile)?,
                    });
                }
                Err(e) => excluded.push(exclusion(&m.subject_id, version, run_index, e.to_string())),
            }
        }
        let outcomes = administer(backend, &jobs, config.workers)?;
        let mut results = Vec::new();
        let mut it = jobs.chunks(2).zip(outcomes.chunks(2));
        for (pair, outs) in &mut it {
            let subject_id = &pair[0].subject_id;
            if let Some(reason) = outs[0].failure.as_ref().or(outs[1].failure.as_ref()) {
                excluded.push(exclusion(subject_id, version, run_index, reason.clone()));
                continue;
            }
            results.push(SubjectResult {
                subject_id: subject_id.clone(),
                version,
                mfq_responses: outs[0].responses.clone(),
                dilemma_responses: outs[1].responses.clone(),
                mfq: score_mfq_with(&questionnaire, &outs[0].responses)?,
                sacrifice: Some(score_dilemmas(&dilemma_set, &outs[1].responses)?),
                completions: outs[0].completions + outs[1].completions,
                reprompts: outs[0].reprompts + outs[1].reprompts,
            });
        }
        records.push(RunRecord {
            run_index,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            config: config.clone(),
            results,
            excluded,
        });
    }
    let report = analyze_phase3(config, materials, &records, benchmark)?;
    Ok(Outcome { report: AnalysisReport::Phase3(Box::new(report)), records })
}

fn run_table(record: &RunRecord, materials: &[SubjectMaterial], lambda: f64) -> Result<RunTable> {
    let mft: BTreeMap<&str, PerFoundation<f64>> =
        materials.iter().filter_map(|m| Some((m.subject_id.as_str(), m.profile.as_ref()?.means()))).collect();
    let mut subjects = Vec::new();
    for r in &record.results {
        let Some(s) = &r.sacrifice else { continue };
        subjects.push(SubjectScores {
            subject_id: r.subject_id.clone(),
            version: None,
            smas: Some(s.smas),
            mfq: r.mfq.normalized,
            mft: mft.get(r.subject_id.as_str()).copied().unwrap_or_default(),
        });
    }
    let n = subjects.len();
    let needed = Foundation::ALL.len() + 2;
    if n < needed {
        return Err(ExperimentError::InsufficientSubjects { context: format!("run {}", record.run_index), needed, got: n });
    }
    let y: Vec<f64> = subjects.iter().map(|s| s.smas.unwrap_or_default()).collect();
    let columns: Vec<Vec<f64>> = Foundation::ALL.iter().map(|&f| subjects.iter().map(|s| s.mfq[f]).collect()).collect();
    let ols = ols_standardized(&columns, &y)?;
    let ridge = ridge_standardized(&columns, &y, lambda)?;

    let series: Vec<&Vec<f64>> = std::iter::once(&y).chain(columns.iter()).collect();
    let mut correlations = vec![vec![1.0; series.len()]; series.len()];
    for i in 0..series.len() {
        for j in 0..i {
            let r = pearson(series[i], series[j])?.r;
            correlations[i][j] = r;
            correlations[j][i] = r;
        }
    }
    let ses = ols.ses.clone().unwrap_or_default();
    let mut rows = vec![TableRow { label: OUTCOME_LABEL.into(), mean: stats::mean(&y), sd: stats::sample_sd(&y), beta: None, se: None }];
    for (i, f) in Foundation::ALL.into_iter().enumerate() {
        rows.push(TableRow {
            label: f.name().into(),
            mean: stats::mean(&columns[i]),
            sd: stats::sample_sd(&columns[i]),
            beta: Some(ols.betas[i]),
            se: ses.get(i).copied(),
        });
    }
    Ok(RunTable { run_index: record.run_index, n, rows, correlations, ols, ridge, subjects })
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    stats::mean(&v)
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.map(|v| stats::mean(&v))
}

/// Cell-wise arithmetic mean of the per-run tables.
pub fn average_tables(tables: &[RunTable]) -> AveragedTable {
    let rows = (0..tables[0].rows.len())
        .map(|i| TableRow {
            label: tables[0].rows[i].label.clone(),
            mean: mean_of(tables.iter().map(|t| t.rows[i].mean)),
            sd: mean_of(tables.iter().map(|t| t.rows[i].sd)),
            beta: mean_opt(tables.iter().map(|t| t.rows[i].beta)),
            se: mean_opt(tables.iter().map(|t| t.rows[i].se)),
        })
        .collect();
    let dim = tables[0].correlations.len();
    let correlations = (0..dim)
        .map(|i| (0..dim).map(|j| mean_of(tables.iter().map(|t| t.correlations[i][j]))).collect())
        .collect();
    AveragedTable { runs: tables.len(), rows, correlations }
}

pub fn analyze_phase3(
    config: &ExperimentConfig,
    materials: &[SubjectMaterial],
    records: &[RunRecord],
    benchmark: &HumanBenchmark,
) -> Result<Phase3Report> {
    let run_tables = records.iter().map(|r| run_table(r, materials, config.ridge_lambda)).collect::<Result<Vec<_>>>()?;
    let averaged = average_tables(&run_tables);
    let coefficients = run_tables
        .iter()
        .flat_map(|t| {
            Foundation::ALL.into_iter().enumerate().map(move |(i, f)| CoefficientRow {
                run_index: t.run_index,
                predictor: f,
                beta_ols: t.ols.betas[i],
                beta_ridge: t.ridge.betas[i],
            })
        })
        .collect();
    let stability = if run_tables.len() >= 2 {
        let ols: Vec<Vec<f64>> = run_tables.iter().map(|t| t.ols.betas.clone()).collect();
        let ridge: Vec<Vec<f64>> = run_tables.iter().map(|t| t.ridge.betas.clone()).collect();
        Some(Stability { ols: stability_summary(&ols)?, ridge: stability_summary(&ridge)? })
    } else {
        None
    };
    let fit = run_tables.iter().map(|t| FitRow { run_index: t.run_index, r2_ols: t.ols.r2, r2_ridge: t.ridge.r2 }).collect();
    let n_llm = run_tables.iter().map(|t| t.n).min().unwrap_or(0);
    let df2 = chow_df2(n_llm, benchmark.n, benchmark.predictors);
    let mut fisher = Vec::new();
    let mut chow = Vec::new();
    for (i, f) in Foundation::ALL.into_iter().enumerate() {
        let r_llm = averaged.correlations[i + 1][0];
        let z = fisher_z_diff(r_llm, n_llm, benchmark.r[f], benchmark.n).ok();
        fisher.push(FisherRow { foundation: f, r_llm, r_human: benchmark.r[f], z: z.map(|c| c.statistic), p: z.map(|c| c.p) });
        let row = &averaged.rows[i + 1];
        let (beta_llm, se_llm) = (row.beta.unwrap_or(f64::NAN), row.se.unwrap_or(f64::NAN));
        let test = coef_diff_f(benchmark.beta[f], benchmark.se[f], beta_llm, se_llm, df2).ok();
        chow.push(ChowRow {
            foundation: f,
            beta_human: benchmark.beta[f],
            se_human: benchmark.se[f],
            beta_llm,
            se_llm,
            delta: beta_llm - benchmark.beta[f],
            f: test.map(|c| c.statistic),
            p: test.map(|c| c.p),
            df2,
        });
    }
    Ok(Phase3Report {
        condition: config.condition,
        runs: config.runs,
        backend: config.backend,
        ridge_lambda: config.ridge_lambda,
        n_llm,
        run_tables,
        averaged,
        coefficients,
        stability,
        fit,
        fisher,
        chow,
        benchmark: benchmark.clone(),
        excluded: records.iter().flat_map(|r| r.excluded.iter().cloned()).collect(),
    })
}

/// Canonical JSON text of a report (pretty, trailing newline).
pub fn report_json(report: &AnalysisReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

/// Write `report.json` and `runs/run_<i>.json` under `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir.join(RUNS_DIR))?;
    let mut written = Vec::new();
    let report_path = dir.join(REPORT_FILE);
    std::fs::write(&report_path, report_json(&outcome.report)?)?;
    written.push(report_path);
    for rec in &outcome.records {
        let path = dir.join(RUNS_DIR).join(format!("run_{}.json", rec.run_index));
        std::fs::write(&path, serde_json::to_string_pretty(rec)? + "\n")?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_report(dir: &Path) -> Result<AnalysisReport> {
    let text = std::fs::read_to_string(dir.join(REPORT_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Version label lookup used by the CLI's `--versions v1,v3`.
pub fn parse_versions(list: &str) -> Result<BTreeSet<PersonaVersion>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<PersonaVersion>().map_err(ExperimentError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::CompletionResult;
    use rand::{Rng, SeedableRng};
    use std::sync::atomic::{AtomicU32, Ordering};

    fn decimals(s: &str) -> usize {
        s.split(|c: char| !(c.is_ascii_digit() || c == '.'))
            .filter(|t| t.contains('.') && t.starts_with(|c: char| c.is_ascii_digit()) && t.len() > 2)
            .count()
    }

    fn population(n: usize, seed: u64) -> Vec<SubjectMaterial> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let harm = 1.0 + 8.0 * i as f64 / (n - 1) as f64;
                let means = PerFoundation::from_fn(|f| if f == Foundation::Harm { harm } else { rng.gen_range(1.0..9.0) });
                SubjectMaterial::synthetic(&format!("ceo{i:02}"), means)
            })
            .collect()
    }

    fn ids(m: &[SubjectMaterial]) -> Vec<String> {
        m.iter().map(|m| m.subject_id.clone()).collect()
    }

    // Independent oracle: textbook Pearson r.
    fn oracle_r(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn condition_prompts() {
        let items = dilemmas().items;
        let footbridge = &items[0];
        let p = MoralProfile::constant("x", PerFoundation { harm: 7.36, ..PerFoundation::splat(4.0) });
        let iso = build_condition_prompt(Condition::TraitIsolated, footbridge, &p).unwrap();
        assert!(iso.contains("Answer solely on the basis of your Harm score (7.36)"));
        assert_eq!(decimals(&iso), 1);
        assert!(iso.contains(&footbridge.text));
        assert!(iso.contains("[6] = Absolutely acceptable"));
        let all = build_condition_prompt(Condition::IntegratedTrait, footbridge, &p).unwrap();
        assert_eq!(decimals(&all), 15);
        let mut untagged = footbridge.clone();
        untagged.foundation = None;
        assert!(matches!(
            build_condition_prompt(Condition::TraitIsolated, &untagged, &p),
            Err(ExperimentError::UntaggedItem(1))
        ));
        assert!(build_condition_prompt(Condition::IntegratedTrait, &untagged, &p).is_ok());
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::phase3(vec!["a".into()], Condition::TraitIsolated, BackendKind::Scripted);
        assert!(c.validate().is_ok());
        c.condition = Condition::NotApplicable;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::phase2(vec!["a".into(), "a".into()], BackendKind::Scripted);
        assert!(c.validate().is_err());
        c.subjects.pop();
        c.runs = 0;
        assert!(c.validate().is_err());
        assert_eq!(parse_versions("v1, v3").unwrap().len(), 2);
    }

    #[test]
    fn bundled_benchmark() {
        let b = HumanBenchmark::bundled();
        assert_eq!(b.n, 307);
        assert_eq!((b.r.harm, b.r.purity), (-0.21, -0.16));
        assert_eq!((b.beta.loyalty, b.se.authority), (0.21, 0.09));
    }

    #[test]
    fn phase2_scripted_population() {
        let mut materials = population(25, 7);
        for m in &mut materials {
            m.passages = vec!["We put the safety of our people first.".into()];
        }
        let config = ExperimentConfig::phase2(ids(&materials), BackendKind::Scripted);
        let backend = scripted_backend(&materials);
        let out = run_phase2(&config, &materials, &backend).unwrap();
        let AnalysisReport::Phase2(report) = &out.report else { panic!("phase 2 report expected") };
        assert_eq!(report.rows.len(), 20);
        assert!(report.excluded.is_empty());

        let injected: Vec<f64> = materials.iter().map(|m| m.profile.as_ref().unwrap().means().harm).collect();
        let recovered: Vec<f64> = injected.iter().map(|s| 2.0 * (s / 2.0).round().clamp(0.0, 5.0)).collect();
        let harm = report.rows.iter().find(|r| r.version == PersonaVersion::MftOnly && r.foundation == Foundation::Harm).unwrap();
        assert!((harm.r.unwrap() - oracle_r(&recovered, &injected)).abs() < 1e-12);
        assert!(harm.r.unwrap() >= 0.95);
        let diffs: Vec<f64> = recovered.iter().zip(&injected).map(|(a, b)| a - b).collect();
        assert!((harm.md - diffs.iter().sum::<f64>() / 25.0).abs() < 1e-12);
        assert_eq!(out.records[0].results.len(), 25 * 4);
    }

    #[test]
    fn phase2_identical_scores() {
        let materials: Vec<SubjectMaterial> = (0..5)
            .map(|i| SubjectMaterial::synthetic(&format!("s{i}"), PerFoundation::splat(2.0 * i as f64)))
            .collect();
        let mut config = ExperimentConfig::phase2(ids(&materials), BackendKind::Scripted);
        config.versions = [PersonaVersion::MftOnly].into_iter().collect();
        let out = run_phase2(&config, &materials, &scripted_backend(&materials)).unwrap();
        let AnalysisReport::Phase2(report) = out.report else { panic!() };
        for row in &report.rows {
            assert_eq!((row.md, row.var), (0.0, 0.0));
            assert!((row.r.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phase2_missing_profile_and_too_few() {
        let mut materials = population(4, 1);
        let config = ExperimentConfig::phase2(ids(&materials), BackendKind::Scripted);
        let backend = scripted_backend(&materials);
        materials[2].profile = None;
        assert!(matches!(run_phase2(&config, &materials, &backend), Err(ExperimentError::MissingProfile(s)) if s == "ceo02"));
        let materials = population(4, 1)[..2].to_vec();
        let config = ExperimentConfig::phase2(ids(&materials), BackendKind::Scripted);
        let r = run_phase2(&config, &materials, &scripted_backend(&materials));
        assert!(matches!(r, Err(ExperimentError::InsufficientSubjects { needed: 3, got: 2, .. })));
    }

    #[test]
    fn text_versions_exclude_subjects_without_passages() {
        let materials = population(4, 3);
        let mut config = ExperimentConfig::phase2(ids(&materials), BackendKind::Scripted);
        config.versions = [PersonaVersion::MftOnly, PersonaVersion::TextOnly].into_iter().collect();
        let r = run_phase2(&config, &materials, &scripted_backend(&materials));
        assert!(matches!(r, Err(ExperimentError::InsufficientSubjects { got: 0, .. })));
    }

    #[test]
    fn exclusions_carry_reasons() {
        let mut materials = population(4, 4);
        materials[1].demographics = None;
        let mut config = ExperimentConfig::phase2(ids(&materials), BackendKind::Scripted);
        config.versions = [PersonaVersion::DemographicsOnly].into_iter().collect();
        let out = run_phase2(&config, &materials, &scripted_backend(&materials)).unwrap();
        let AnalysisReport::Phase2(report) = out.report else { panic!() };
        assert_eq!(report.excluded.len(), 1);
        assert_eq!(report.excluded[0].subject_id, "ceo01");
        assert!(report.excluded[0].reason.contains("demographics"));
        assert!(report.rows.iter().all(|r| r.n == 3));
    }

    #[test]
    fn phase3_averaging_and_determinism() {
        let materials = population(20, 11);
        let mut config = ExperimentConfig::phase3(ids(&materials), Condition::IntegratedTrait, BackendKind::Scripted);
        config.runs = 1;
        let backend = scripted_backend(&materials);
        let one = run_phase3(&config, &materials, &backend).unwrap();
        let AnalysisReport::Phase3(r1) = &one.report else { panic!() };
        assert_eq!(r1.averaged.rows, r1.run_tables[0].rows);
        assert_eq!(r1.averaged.correlations, r1.run_tables[0].correlations);
        assert!(r1.stability.is_none());
        assert_eq!(r1.averaged.rows.len(), 6);
        for (i, row) in r1.averaged.correlations.iter().enumerate() {
            assert_eq!(row[i], 1.0);
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, r1.averaged.correlations[j][i]);
            }
        }

        config.runs = 3;
        let a = run_phase3(&config, &materials, &backend).unwrap();
        let b = run_phase3(&config, &materials, &backend).unwrap();
        assert_eq!(report_json(&a.report).unwrap(), report_json(&b.report).unwrap());
        let AnalysisReport::Phase3(r3) = &a.report else { panic!() };
        for i in 1..6 {
            let mean: f64 = r3.run_tables.iter().map(|t| t.rows[i].beta.unwrap()).sum::<f64>() / 3.0;
            assert!((r3.averaged.rows[i].beta.unwrap() - mean).abs() < 1e-12);
        }
        assert_eq!(r3.coefficients.len(), 15);
        assert_eq!(r3.stability.as_ref().unwrap().ols.predictors.len(), 5);
        assert_eq!(r3.chow[0].df2, (20 + 307 - 12) as f64);
        let back: AnalysisReport = serde_json::from_str(&report_json(&a.report).unwrap()).unwrap();
        assert_eq!(back, a.report);
    }

    struct Flaky {
        calls: AtomicU32,
        mode: u8,
    }

    impl CompletionBackend for Flaky {
        fn kind(&self) -> BackendKind {
            BackendKind::Http
        }

        fn complete(&self, req: &CompletionRequest) -> crate::gateway::Result<CompletionResult> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            let text = match self.mode {
                0 if req.user_message.ends_with(REPROMPT) => "3".to_string(),
                0 => "I would rather not say.".to_string(),
                1 => "no idea".to_string(),
                _ => return Err(GatewayError::AuthError("401".into())),
            };
            Ok(CompletionResult { text, latency_ms: 1, attempt_count: 1, model_id: format!("m{n}") })
        }
    }

    #[test]
    fn reprompt_exclusion_and_auth() {
        let materials = population(3, 5);
        let mut config = ExperimentConfig::phase2(ids(&materials), BackendKind::Http);
        config.versions = [PersonaVersion::MftOnly].into_iter().collect();

        let flaky = Flaky { calls: AtomicU32::new(0), mode: 0 };
        let out = run_phase2(&config, &materials, &flaky).unwrap();
        let r = &out.records[0].results[0];
        assert_eq!((r.reprompts, r.completions), (30, 60));
        assert!(r.mfq_responses.iter().all(|x| x.rating == 3));

        let hopeless = Flaky { calls: AtomicU32::new(0), mode: 1 };
        let err = run_phase2(&config, &materials, &hopeless).unwrap_err();
        assert!(matches!(err, ExperimentError::InsufficientSubjects { got: 0, .. }));

        let denied = Flaky { calls: AtomicU32::new(0), mode: 2 };
        assert!(matches!(run_phase2(&config, &materials, &denied), Err(ExperimentError::Gateway(GatewayError::AuthError(_)))));

        let scripted = scripted_backend(&materials);
        assert!(matches!(run_phase2(&config, &materials, &scripted), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn phase3_needs_enough_subjects() {
        let materials = population(5, 2);
        let config = ExperimentConfig::phase3(ids(&materials), Condition::TraitIsolated, BackendKind::Scripted);
        let r = run_phase3(&config, &materials, &scripted_backend(&materials));
        assert!(matches!(r, Err(ExperimentError::InsufficientSubjects { needed: 7, got: 5, .. })));
    }

    #[test]
    fn outcome_files_round_trip() {
        let materials = population(8, 9);
        let mut config = ExperimentConfig::phase3(ids(&materials), Condition::TraitIsolated, BackendKind::Scripted);
        config.runs = 2;
        let out = run_phase3(&config, &materials, &scripted_backend(&materials)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_outcome(&out, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(load_report(dir.path()).unwrap(), out.report);
    }
}
