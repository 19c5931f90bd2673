use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lecturebook"));
    cmd.env_remove("WORKDIR")
        .env_remove("SERVICE_BASE_URL")
        .env_remove("SERVICE_TOKEN")
        .env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden_corpus.jsonl")
}

fn demo(dir: &Path) -> PathBuf {
    let project = dir.join("demo");
    let out = run(&["demo", "--out", s(&project)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    project.join("config.toml")
}

#[test]
fn run_all_on_the_demo_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo(dir.path());
    let work = dir.path().join("work");
    let out = run(&["run", "all", "--config", s(&config), "--workdir", s(&work), "--mock"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let corpus = work.join("corpus/corpus.jsonl");
    assert!(std::fs::read(&corpus).unwrap() == std::fs::read(golden()).unwrap());

    let out = run(&["validate", s(&corpus)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = run(&["metrics", "stats", s(&corpus)]);
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["n_samples"], 3);

    let shuffled = dir.path().join("shuffled.jsonl");
    let out = run(&["metrics", "shuffle", s(&corpus), "--p", "1.0", "--seed", "3", "--out", s(&shuffled)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&shuffled).unwrap().lines().count(), 3);
}

#[test]
fn interrupted_run_resumes_to_the_same_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo(dir.path());
    let work = dir.path().join("work");
    let out = run(&["run", "all", "--config", s(&config), "--workdir", s(&work), "--abort-after", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!work.join("corpus/corpus.jsonl").exists());
    let out = run(&["run", "all", "--config", s(&config), "--workdir", s(&work)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read(work.join("corpus/corpus.jsonl")).unwrap() == std::fs::read(golden()).unwrap());
}

#[test]
fn missing_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[inputs]\ntaxonomy = \"t.json\"\nsearch_backend = \"fixture:s\"\n\n[services]\nmode = \"mock\"\n").unwrap();
    let out = run(&["run", "all", "--config", s(&config), "--workdir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("media_dir"));

    let out = run(&["run", "all", "--config", s(&dir.path().join("absent.toml")), "--workdir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_stage_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo(dir.path());
    let out = run(&["run", "everything", "--config", s(&config), "--workdir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn doctor_reports_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo(dir.path());
    let out = run(&["doctor", "--config", s(&config), "--workdir", s(&dir.path().join("work"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[ ok ] workdir"));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = run(&["doctor", "--config", s(&config), "--workdir", s(&blocker)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL] workdir"));
}

#[test]
fn validate_flags_a_broken_record() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    let mut line = std::fs::read_to_string(golden()).unwrap().lines().next().unwrap().to_string();
    line = line.replace("\"n_images\":2", "\"n_images\":5");
    std::fs::write(&bad, line + "\n").unwrap();
    let out = run(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn collect_prints_deduplicated_results() {
    let dir = tempfile::tempdir().unwrap();
    demo(dir.path());
    let project = dir.path().join("demo");
    let backend = format!("fixture:{}", s(&project.join("search")));
    let out = run(&["collect", "--taxonomy", s(&project.join("taxonomy.json")), "--backend", &backend]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = String::from_utf8(out.stdout).unwrap();
    assert_eq!(lines.lines().count(), 7);
}
