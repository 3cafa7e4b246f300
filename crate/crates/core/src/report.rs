//! Report rendering: full-precision JSON, one CSV per table, and
//! Markdown tables rounded the way journal tables are.
//!
//! Files written into the output directory:
//!
//! | format | phase 2 | phase 3 |
//! |---|---|---|
//! | json | `report.json` | `report.json` |
//! | csv | `agreement.csv`, `subject_scores.csv` | `run_<i>_table.csv`, `averaged_table.csv`, `coefficients.csv`, `stability.csv`, `fit.csv`, `fisher.csv`, `chow.csv`, `subject_scores.csv` |
//! | md | `report.md` | `report.md` |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::experiment::{report_json, AgreementRow, AnalysisReport, AveragedTable, Phase2Report, Phase3Report, TableRow};
use crate::foundation::{round_half_away, Foundation};
use crate::gateway::Condition;

pub const AGREEMENT_HEADER: [&str; 6] = ["Version", "Foundation", "MD", "Var", "Pearson's r (p)", "Mean Bias (LoA)"];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Experiment(#[from] crate::experiment::ExperimentError),
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
}

pub type Result<T> = std::result::Result<T, ReportError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

/// Parse "md,csv,json".
pub fn parse_formats(list: &str) -> Result<BTreeSet<ReportFormat>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

fn fixed(x: f64, places: i32) -> String {
    let scale = 10f64.powi(places);
    format!("{:.*}", places as usize, round_half_away(x * scale) / scale)
}

pub fn fmt2(x: f64) -> String {
    fixed(x, 2)
}

pub fn fmt3(x: f64) -> String {
    fixed(x, 3)
}

/// p values below .001 render as "<0.001".
pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        fmt3(p)
    }
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "n/a".into())
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = md_row(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    out += &md_row(&header.iter().map(|_| "---".to_string()).collect::<Vec<_>>());
    for r in rows {
        out += &md_row(r);
    }
    out
}

/// Formatted cells for one agreement row.
pub fn agreement_cells(row: &AgreementRow) -> Vec<String> {
    vec![
        row.version.label().to_string(),
        row.foundation.label().to_string(),
        fmt2(row.md),
        fmt2(row.var),
        match (row.r, row.p) {
            (Some(r), Some(p)) => format!("{} ({})", fmt2(r), fmt_p(p)),
            _ => "n/a".into(),
        },
        format!("{} ({}, {})", fmt2(row.bias), fmt2(row.loa_low), fmt2(row.loa_high)),
    ]
}

fn exclusions_md(report_excluded: &[crate::experiment::Exclusion]) -> String {
    if report_excluded.is_empty() {
        return String::new();
    }
    let mut out = String::from("\n## Excluded\n\n");
    for e in report_excluded {
        let version = e.version.map(|v| format!(" {}", v.label())).unwrap_or_default();
        let run = e.run_index.map(|r| format!(" run {r}")).unwrap_or_default();
        let _ = writeln!(out, "- {}{version}{run}: {}", e.subject_id, e.reason);
    }
    out
}

fn phase2_markdown(report: &Phase2Report) -> String {
    let mut rows = Vec::new();
    let mut last = None;
    for row in &report.rows {
        let mut cells = agreement_cells(row);
        if last == Some(row.version) {
            cells[0].clear();
        }
        last = Some(row.version);
        rows.push(cells);
    }
    let ns: BTreeSet<usize> = report.rows.iter().map(|r| r.n).collect();
    let n_text = ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("/");
    let mut out = String::from("# Persona versions against text-derived moral profiles\n\n");
    out += "Descriptives, correlations, and mean bias (limits of agreement) for each persona version, by moral foundation\n\n";
    out += &md_table(&AGREEMENT_HEADER, &rows);
    let _ = writeln!(out, "\nNote. Values are based on N = {n_text} subjects. Significance is reported via p values in parentheses.");
    out += &exclusions_md(&report.excluded);
    out
}

fn condition_name(c: Condition) -> &'static str {
    match c {
        Condition::TraitIsolated => "Trait-Isolated Prompting",
        Condition::IntegratedTrait => "Integrated-Trait Prompting",
        Condition::NotApplicable => "No Prompting Condition",
    }
}

/// Descriptives with β (SE) and lower-triangle correlations.
fn descriptive_table(rows: &[TableRow], correlations: &[Vec<f64>]) -> String {
    let k = rows.len();
    let mut header = vec!["", "M", "SD", "β (SE)"];
    let numbers: Vec<String> = (1..k).map(|i| i.to_string()).collect();
    header.extend(numbers.iter().map(String::as_str));
    let body: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut cells = vec![
                format!("{}. {}", i + 1, row.label),
                fmt2(row.mean),
                fmt2(row.sd),
                match (row.beta, row.se) {
                    (Some(b), Some(se)) => format!("{} ({})", fmt2(b), fmt2(se)),
                    (Some(b), None) => fmt2(b),
                    _ => "–".into(),
                },
            ];
            for j in 0..k - 1 {
                cells.push(match j.cmp(&i) {
                    std::cmp::Ordering::Less => fmt2(correlations[i][j]),
                    std::cmp::Ordering::Equal => "–".into(),
                    std::cmp::Ordering::Greater => String::new(),
                });
            }
            cells
        })
        .collect();
    md_table(&header, &body)
}

fn averaged_markdown(avg: &AveragedTable, condition: Condition) -> String {
    let mut out = format!("## Mean Results Across {} Runs ({})\n\n", avg.runs, condition_name(condition));
    out += &descriptive_table(&avg.rows, &avg.correlations);
    out += "\nNote. Values are means averaged across stochastic runs. Significance tests are not reported because coefficients are aggregated across replications.\n";
    out
}

fn phase3_markdown(report: &Phase3Report) -> String {
    let cond = condition_name(report.condition);
    let mut out = format!("# Sacrificial dilemmas: {cond}\n\n");
    out += &averaged_markdown(&report.averaged, report.condition);

    out += &format!("\n## Fisher's r-to-z Comparison Between LLM Average and Human Benchmark ({cond})\n\n");
    let rows: Vec<Vec<String>> = report
        .fisher
        .iter()
        .map(|r| vec![r.foundation.label().into(), fmt2(r.r_llm), fmt2(r.r_human), opt(r.z, fmt3), opt(r.p, fmt_p)])
        .collect();
    out += &md_table(&["Foundation", "Pearson r (LLM)", "Pearson r (Human)", "Fisher's z_diff", "Two-tailed p"], &rows);
    let _ = writeln!(
        out,
        "\nNote. LLM correlations are averaged across runs (n = {}); human benchmark n = {}. p values are two-tailed.",
        report.n_llm, report.benchmark.n
    );

    out += &format!("\n## Coefficient Differences Between LLM Average and Human Benchmark ({cond})\n\n");
    let df2 = report.chow.first().map(|c| c.df2).unwrap_or(0.0);
    let f_header = format!("F(1, {df2})");
    let rows: Vec<Vec<String>> = report
        .chow
        .iter()
        .map(|c| {
            vec![
                c.foundation.label().into(),
                format!("{} ({})", fmt2(c.beta_human), fmt2(c.se_human)),
                format!("{} ({})", fmt2(c.beta_llm), fmt2(c.se_llm)),
                fmt2(c.delta),
                opt(c.f, fmt3),
                opt(c.p, fmt_p),
            ]
        })
        .collect();
    out += &md_table(&["Foundation", "β_Human (SE)", "β_LLM (SE)", "Δβ (LLM – Human)", &f_header, "p"], &rows);
    out += "\nNote. F = Δβ² / (SE_Human² + SE_LLM²) on (1, df₂). No multiple-comparison correction was applied.\n";

    out += &format!("\n## OLS and Ridge Coefficients (Run-Level Results, λ = {})\n\n", report.ridge_lambda);
    let rows: Vec<Vec<String>> = report
        .coefficients
        .iter()
        .map(|c| vec![c.run_index.to_string(), c.predictor.name().into(), fmt3(c.beta_ols), fmt3(c.beta_ridge)])
        .collect();
    out += &md_table(&["run", "predictor", "beta_ols", "beta_ridge"], &rows);

    if let Some(st) = &report.stability {
        out += "\n## Coefficient Stability Summary\n\n";
        let rows: Vec<Vec<String>> = Foundation::ALL
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let (o, r) = (&st.ols.predictors[i], &st.ridge.predictors[i]);
                vec![
                    f.name().into(),
                    fmt3(o.mean),
                    fmt3(o.sd),
                    fmt3(o.min),
                    fmt3(o.max),
                    fmt3(r.mean),
                    fmt3(r.sd),
                    o.positive.to_string(),
                    o.negative.to_string(),
                ]
            })
            .collect();
        out += &md_table(
            &[
                "",
                "beta_ols_mean",
                "beta_ols_sd",
                "beta_ols_min",
                "beta_ols_max",
                "beta_ridge_mean",
                "beta_ridge_sd",
                "ols_positive",
                "ols_negative",
            ],
            &rows,
        );
        let _ = writeln!(out, "\nNote. Summaries across {} runs, including sign stability of the OLS coefficients.", st.ols.runs);
    }

    out += "\n## Model Fit (R²) Across Runs\n\n";
    let rows: Vec<Vec<String>> =
        report.fit.iter().map(|f| vec![f.run_index.to_string(), fmt3(f.r2_ols), fmt3(f.r2_ridge)]).collect();
    out += &md_table(&["run", "R2_ols", "R2_ridge"], &rows);

    for t in &report.run_tables {
        let _ = write!(out, "\n## Run {} ({cond})\n\n", t.run_index);
        out += &descriptive_table(&t.rows, &t.correlations);
        let _ = writeln!(out, "\nNote. N = {}. Intercorrelations are presented below the diagonal.", t.n);
    }
    out += &exclusions_md(&report.excluded);
    out
}

pub fn render_markdown(report: &AnalysisReport) -> String {
    match report {
        AnalysisReport::Phase2(r) => phase2_markdown(r),
        AnalysisReport::Phase3(r) => phase3_markdown(r),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    x.to_string()
}

fn num_opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn table_csv(path: &Path, rows: &[TableRow], correlations: &[Vec<f64>]) -> Result<()> {
    let mut header = vec!["label".to_string(), "mean".into(), "sd".into(), "beta".into(), "se".into()];
    header.extend((1..=rows.len()).map(|i| format!("r_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let body = rows.iter().enumerate().map(|(i, r)| {
        let mut cells = vec![r.label.clone(), num(r.mean), num(r.sd), num_opt(r.beta), num_opt(r.se)];
        cells.extend(correlations[i].iter().map(|&c| num(c)));
        cells
    });
    write_csv(path, &header, body)
}

fn csv_files(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: String| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    match report {
        AnalysisReport::Phase2(r) => {
            write_csv(
                &emit("agreement.csv".into()),
                &["version", "foundation", "n", "md", "var", "r", "p", "bias", "loa_low", "loa_high"],
                r.rows.iter().map(|a| {
                    vec![
                        a.version.short().into(),
                        a.foundation.name().into(),
                        a.n.to_string(),
                        num(a.md),
                        num(a.var),
                        num_opt(a.r),
                        num_opt(a.p),
                        num(a.bias),
                        num(a.loa_low),
                        num(a.loa_high),
                    ]
                }),
            )?;
            write_csv(
                &emit("subject_scores.csv".into()),
                &subject_header(),
                r.subjects.iter().map(|s| subject_cells(s.version.map(|v| v.short().to_string()).unwrap_or_default(), s)),
            )?;
        }
        AnalysisReport::Phase3(r) => {
            for t in &r.run_tables {
                table_csv(&emit(format!("run_{}_table.csv", t.run_index)), &t.rows, &t.correlations)?;
            }
            table_csv(&emit("averaged_table.csv".into()), &r.averaged.rows, &r.averaged.correlations)?;
            write_csv(
                &emit("coefficients.csv".into()),
                &["run", "predictor", "beta_ols", "beta_ridge"],
                r.coefficients
                    .iter()
                    .map(|c| vec![c.run_index.to_string(), c.predictor.name().into(), num(c.beta_ols), num(c.beta_ridge)]),
            )?;
            if let Some(st) = &r.stability {
                write_csv(
                    &emit("stability.csv".into()),
                    &[
                        "predictor",
                        "beta_ols_mean",
                        "beta_ols_sd",
                        "beta_ols_min",
                        "beta_ols_max",
                        "beta_ridge_mean",
                        "beta_ridge_sd",
                        "ols_positive",
                        "ols_negative",
                        "ols_zero",
                    ],
                    Foundation::ALL.into_iter().enumerate().map(|(i, f)| {
                        let (o, rd) = (&st.ols.predictors[i], &st.ridge.predictors[i]);
                        vec![
                            f.name().into(),
                            num(o.mean),
                            num(o.sd),
                            num(o.min),
                            num(o.max),
                            num(rd.mean),
                            num(rd.sd),
                            o.positive.to_string(),
                            o.negative.to_string(),
                            o.zero.to_string(),
                        ]
                    }),
                )?;
            }
            write_csv(
                &emit("fit.csv".into()),
                &["run", "r2_ols", "r2_ridge"],
                r.fit.iter().map(|f| vec![f.run_index.to_string(), num(f.r2_ols), num(f.r2_ridge)]),
            )?;
            write_csv(
                &emit("fisher.csv".into()),
                &["foundation", "r_llm", "r_human", "z", "p"],
                r.fisher.iter().map(|f| vec![f.foundation.name().into(), num(f.r_llm), num(f.r_human), num_opt(f.z), num_opt(f.p)]),
            )?;
            write_csv(
                &emit("chow.csv".into()),
                &["foundation", "beta_human", "se_human", "beta_llm", "se_llm", "delta", "f", "p", "df2"],
                r.chow.iter().map(|c| {
                    vec![
                        c.foundation.name().into(),
                        num(c.beta_human),
                        num(c.se_human),
                        num(c.beta_llm),
                        num(c.se_llm),
                        num(c.delta),
                        num_opt(c.f),
                        num_opt(c.p),
                        num(c.df2),
                    ]
                }),
            )?;
            write_csv(
                &emit("subject_scores.csv".into()),
                &subject_header(),
                r.run_tables.iter().flat_map(|t| t.subjects.iter().map(move |s| subject_cells(t.run_index.to_string(), s))),
            )?;
        }
    }
    Ok(written)
}

fn subject_header() -> Vec<&'static str> {
    vec![
        "group",
        "subject_id",
        "smas",
        "mfq_harm",
        "mfq_fairness",
        "mfq_loyalty",
        "mfq_authority",
        "mfq_purity",
        "mft_harm",
        "mft_fairness",
        "mft_loyalty",
        "mft_authority",
        "mft_purity",
    ]
}

fn subject_cells(group: String, s: &crate::experiment::SubjectScores) -> Vec<String> {
    let mut cells = vec![group, s.subject_id.clone(), num_opt(s.smas)];
    cells.extend(s.mfq.iter().map(|(_, &v)| num(v)));
    cells.extend(s.mft.iter().map(|(_, &v)| num(v)));
    cells
}

/// Write the requested formats into `dir`; returns the files written.
pub fn emit_report(report: &AnalysisReport, formats: &BTreeSet<ReportFormat>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = dir.join(crate::experiment::REPORT_FILE);
                std::fs::write(&path, report_json(report)?)?;
                written.push(path);
            }
            ReportFormat::Csv => written.extend(csv_files(report, dir)?),
            ReportFormat::Markdown => {
                let path = dir.join("report.md");
                std::fs::write(&path, render_markdown(report))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
