use std::path::Path;
use std::process::{Command, Output};

const WORDS: [&str; 5] = ["compassion", "justice", "loyalty", "obedience", "purity"];

// Which foundations each synthetic executive talks about.
const PATTERNS: [&[usize]; 10] = [&[0], &[1], &[2], &[3], &[4], &[0, 1], &[2, 3, 4], &[0, 2], &[1, 4], &[]];

fn lab(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persona-lab"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("PERSONA_LAB_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn seed_store(dir: &Path) -> std::path::PathBuf {
    let store = dir.join("store");
    let mut ids = Vec::new();
    for (i, pattern) in PATTERNS.iter().enumerate() {
        let id = format!("ceo{i:02}");
        let text: String = if pattern.is_empty() {
            "Quarterly revenue grew in line with guidance.".into()
        } else {
            pattern.iter().map(|&f| format!("We speak of {} often. ", WORDS[f])).collect()
        };
        let file = dir.join(format!("{id}.txt"));
        std::fs::write(&file, text).unwrap();
        ok(lab(
            &store,
            &["ingest", "--subject", &id, "--source", "news", "--year", "2022", "--age", "55", file.to_str().unwrap()],
        ));
        ids.push(id);
    }
    std::fs::write(dir.join("subjects.txt"), format!("# executives\n{}\n", ids.join("\n"))).unwrap();
    store
}

#[test]
fn full_pipeline_with_scripted_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let store = seed_store(dir);
    let subjects = dir.join("subjects.txt");

    let out = ok(lab(&store, &["profile", "--all"]));
    assert_eq!(out.lines().count(), 10);
    assert!(out.contains("ceo00 (1 docs): Harm [8.80, 8.80, 8.80]"), "{out}");

    let p2 = dir.join("p2");
    ok(lab(
        &store,
        &["phase2", "--subjects", subjects.to_str().unwrap(), "--versions", "v1,v3", "--out", p2.to_str().unwrap()],
    ));
    let md = std::fs::read_to_string(p2.join("report.md")).unwrap();
    assert!(md.contains("| Version | Foundation | MD | Var | Pearson's r (p) | Mean Bias (LoA) |"));
    assert!(p2.join("runs/run_1.json").exists());

    let p3 = dir.join("p3");
    let args = ["phase3", "--subjects", subjects.to_str().unwrap(), "--condition", "integrated", "--runs", "2", "--out"];
    ok(lab(&store, &[&args[..], &[p3.to_str().unwrap()]].concat()));
    let first = std::fs::read(p3.join("report.json")).unwrap();

    let p3b = dir.join("p3b");
    ok(lab(&store, &[&args[..], &[p3b.to_str().unwrap()]].concat()));
    assert_eq!(first, std::fs::read(p3b.join("report.json")).unwrap());

    let csv_dir = dir.join("tables");
    let listed = ok(lab(&store, &["report", "--run-dir", p3.to_str().unwrap(), "--format", "csv", "--out", csv_dir.to_str().unwrap()]));
    assert!(listed.contains("stability.csv"));
    let stability = std::fs::read_to_string(csv_dir.join("stability.csv")).unwrap();
    assert_eq!(stability.lines().count(), 6);
}

#[test]
fn batch_ingest_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let store = dir.join("store");
    let batch = dir.join("batch.jsonl");
    std::fs::write(
        &batch,
        "{\"subject_id\":\"a1\",\"source\":\"news\",\"year\":2020,\"text\":\"We care.\"}\n\
         {\"subject_id\":\"a1\",\"source\":\"annual_report\",\"year\":2021,\"text\":\"Integrity matters.\"}\n",
    )
    .unwrap();
    let out = ok(lab(&store, &["ingest", "--batch", batch.to_str().unwrap()]));
    assert!(out.contains("ingested 2 documents"));

    let again = lab(&store, &["ingest", "--batch", batch.to_str().unwrap()]);
    assert!(!again.status.success());

    ok(lab(&store, &["profile", "--subject", "a1"]));
    std::fs::write(dir.join("s.txt"), "a1\n").unwrap();
    let http = lab(&store, &["phase2", "--subjects", dir.join("s.txt").to_str().unwrap(), "--backend", "http"]);
    assert!(!http.status.success());
    assert!(String::from_utf8_lossy(&http.stderr).contains("base_url"));

    let missing = lab(&store, &["report", "--run-dir", dir.join("nowhere").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}
