use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use persona_lab::config::LabConfig;
use persona_lab::corpus::{parse_batch, CorpusStore, Demographics, Source};
use persona_lab::experiment::{
    load_materials, load_report, parse_versions, run_phase2, run_phase3, scripted_backend, write_outcome, ExperimentConfig, Outcome,
    SubjectMaterial,
};
use persona_lab::foundation::Foundation;
use persona_lab::gateway::{BackendKind, CompletionBackend, Condition, HttpBackend};
use persona_lab::report::{emit_report, parse_formats, ReportFormat};
use persona_lab::scaffold::{profile_subject, save_profile, Lexicon, LexiconScorer, MoralScorer, RemoteScorer};

#[derive(Parser)]
#[command(name = "persona-lab", version, about = "Build moral-foundation personas and validate them against questionnaires")]
struct Cli {
    /// Corpus store directory.
    #[arg(long, global = true, env = "PERSONA_LAB_STORE", default_value = "persona-store")]
    store: PathBuf,

    /// TOML config file (backend, concurrency, retries, k passages, lambda).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Lexicon,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Http,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Http => BackendKind::Http,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Isolated,
    Integrated,
}

#[derive(Subcommand)]
enum Command {
    /// Add documents (and optionally demographics) for a subject.
    Ingest {
        #[arg(long, required_unless_present = "batch")]
        subject: Option<String>,
        /// annual_report, news or video_transcript
        #[arg(long, requires = "subject")]
        source: Option<String>,
        #[arg(long, requires = "source")]
        year: Option<i32>,
        /// JSON-lines batch: {"subject_id","source","year","text"} per line.
        #[arg(long, conflicts_with_all = ["subject", "files"])]
        batch: Option<PathBuf>,
        #[arg(long, requires = "subject")]
        age: Option<u32>,
        #[arg(long, requires = "subject")]
        gender: Option<String>,
        #[arg(long, requires = "subject")]
        education: Option<String>,
        #[arg(long, requires = "subject")]
        experience: Option<String>,
        files: Vec<PathBuf>,
    },
    /// Score a subject's documents and store the moral profile.
    Profile {
        #[arg(long, required_unless_present = "all")]
        subject: Vec<String>,
        /// Profile every subject in the store.
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum, default_value = "lexicon")]
        scorer: ScorerArg,
        /// Replacement lexicon (lemma, foundation, valence; tab separated).
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Administer the MFQ to persona versions and compare with profiles.
    Phase2 {
        /// File with one subject id per line.
        #[arg(long)]
        subjects: PathBuf,
        #[arg(long, default_value = "v1,v2,v3,v4")]
        versions: String,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: BackendArg,
        #[arg(long, default_value_t = 1)]
        runs: u32,
        #[arg(long, default_value = "phase2-out")]
        out: PathBuf,
    },
    /// Administer the sacrificial dilemmas and MFQ with replication.
    Phase3 {
        #[arg(long)]
        subjects: PathBuf,
        #[arg(long, value_enum)]
        condition: ConditionArg,
        #[arg(long, default_value_t = 5)]
        runs: u32,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: BackendArg,
        #[arg(long, default_value = "phase3-out")]
        out: PathBuf,
    },
    /// Render a finished run directory as Markdown, CSV and/or JSON.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "md,csv,json")]
        format: String,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_subjects(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let subjects: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if subjects.is_empty() {
        bail!("{} lists no subjects", path.display());
    }
    Ok(subjects)
}

fn ingest(
    store: &mut CorpusStore,
    subject: Option<String>,
    source: Option<String>,
    year: Option<i32>,
    batch: Option<PathBuf>,
    demo: Demographics,
    files: Vec<PathBuf>,
) -> Result<()> {
    if let Some(batch) = batch {
        let text = std::fs::read_to_string(&batch).with_context(|| format!("reading {}", batch.display()))?;
        let entries = parse_batch(&text)?;
        for e in &entries {
            store.ingest_document(&e.subject_id, e.source, e.year, &e.text)?;
        }
        println!("ingested {} documents from {}", entries.len(), batch.display());
        return Ok(());
    }
    let subject = subject.expect("clap enforces --subject");
    let has_demo = demo.age.is_some() || demo.gender.is_some() || demo.education.is_some() || demo.professional_summary.is_some();
    if files.is_empty() && !has_demo {
        bail!("nothing to ingest: pass files or demographic fields");
    }
    if !files.is_empty() {
        let (Some(source), Some(year)) = (source, year) else {
            bail!("--source and --year are required when ingesting files");
        };
        let source: Source = source.parse()?;
        for f in &files {
            let raw = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            let doc = store.ingest_document(&subject, source, year, &raw).with_context(|| format!("ingesting {}", f.display()))?;
            println!("{}  {}", doc.doc_id, f.display());
        }
    }
    if has_demo {
        store.put_demographics(&Demographics { subject_id: subject.clone(), ..demo })?;
    }
    let m = store.manifest(&subject)?;
    println!(
        "{subject}: annual_report={} news={} video_transcript={}",
        m.counts.annual_report, m.counts.news, m.counts.video_transcript
    );
    Ok(())
}

fn profile(store: &CorpusStore, cfg: &LabConfig, subjects: Vec<String>, all: bool, scorer: ScorerArg, lexicon: Option<PathBuf>) -> Result<()> {
    let subjects = if all { store.subjects()? } else { subjects };
    let scorer: Box<dyn MoralScorer> = match scorer {
        ScorerArg::Lexicon => {
            let lex = match lexicon {
                Some(p) => Lexicon::parse(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => Lexicon::bundled(),
            };
            Box::new(LexiconScorer::new(lex))
        }
        ScorerArg::Remote => Box::new(RemoteScorer::new(cfg.remote_scorer()?)?),
    };
    for s in subjects {
        let p = profile_subject(store, &s, scorer.as_ref(), cfg.concurrency).with_context(|| format!("profiling {s}"))?;
        save_profile(store, &p)?;
        let cells: Vec<String> = Foundation::ALL.into_iter().map(|f| format!("{} [{}]", f.name(), p.summary_cell(f))).collect();
        println!("{s} ({} docs): {}", p.n_docs(), cells.join("; "));
    }
    Ok(())
}

fn backend_for(kind: BackendKind, cfg: &LabConfig, materials: &[SubjectMaterial]) -> Result<Box<dyn CompletionBackend>> {
    Ok(match kind {
        BackendKind::Scripted => Box::new(scripted_backend(materials)),
        BackendKind::Http => Box::new(HttpBackend::new(cfg.http()?)?),
    })
}

fn apply(cfg: &LabConfig, mut exp: ExperimentConfig, out: PathBuf, runs: u32) -> ExperimentConfig {
    exp.runs = runs;
    exp.output_dir = out;
    exp.sampling = cfg.sampling();
    exp.k_passages = cfg.k_passages;
    exp.ridge_lambda = cfg.ridge_lambda;
    exp.workers = cfg.concurrency;
    exp
}

fn finish(outcome: &Outcome, dir: &Path) -> Result<()> {
    let written = write_outcome(outcome, dir)?;
    let formats: BTreeSet<ReportFormat> = [ReportFormat::Markdown].into_iter().collect();
    let md = emit_report(&outcome.report, &formats, dir)?;
    let excluded: usize = outcome.records.iter().map(|r| r.excluded.len()).sum();
    println!("wrote {} files to {} ({excluded} exclusions)", written.len() + md.len(), dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => LabConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => LabConfig::default(),
    };
    match cli.command {
        Command::Ingest { subject, source, year, batch, age, gender, education, experience, files } => {
            let mut store = CorpusStore::open(&cli.store)?;
            let demo = Demographics { subject_id: String::new(), age, gender, education, professional_summary: experience };
            ingest(&mut store, subject, source, year, batch, demo, files)
        }
        Command::Profile { subject, all, scorer, lexicon } => {
            let store = CorpusStore::open(&cli.store)?;
            profile(&store, &cfg, subject, all, scorer, lexicon)
        }
        Command::Phase2 { subjects, versions, backend, runs, out } => {
            let store = CorpusStore::open(&cli.store)?;
            let mut exp = apply(&cfg, ExperimentConfig::phase2(read_subjects(&subjects)?, backend.into()), out, runs);
            exp.versions = parse_versions(&versions)?;
            let materials = load_materials(&store, &exp)?;
            let backend = backend_for(exp.backend, &cfg, &materials)?;
            let outcome = run_phase2(&exp, &materials, backend.as_ref())?;
            finish(&outcome, &exp.output_dir)
        }
        Command::Phase3 { subjects, condition, runs, backend, out } => {
            let store = CorpusStore::open(&cli.store)?;
            let condition = match condition {
                ConditionArg::Isolated => Condition::TraitIsolated,
                ConditionArg::Integrated => Condition::IntegratedTrait,
            };
            let exp = apply(&cfg, ExperimentConfig::phase3(read_subjects(&subjects)?, condition, backend.into()), out, runs);
            let materials = load_materials(&store, &exp)?;
            let backend = backend_for(exp.backend, &cfg, &materials)?;
            let outcome = run_phase3(&exp, &materials, backend.as_ref())?;
            finish(&outcome, &exp.output_dir)
        }
        Command::Report { run_dir, format, out } => {
            let report = load_report(&run_dir).with_context(|| format!("reading report in {}", run_dir.display()))?;
            let formats = parse_formats(&format)?;
            let dir = out.unwrap_or(run_dir);
            for p in emit_report(&report, &formats, &dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
