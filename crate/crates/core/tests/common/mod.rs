#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lecturebook::pipeline::{Pipeline, RunConfig, RunReport, Stage, StageSelection, Workdir};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn demo_dir() -> PathBuf {
    fixtures_dir().join("demo")
}

pub fn golden_corpus() -> PathBuf {
    fixtures_dir().join("golden_corpus.jsonl")
}

pub fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

pub fn demo_config() -> RunConfig {
    RunConfig::load(&demo_dir().join("config.toml")).expect("committed demo config loads")
}

pub fn pipeline(workdir: &Path) -> Pipeline {
    Pipeline::new(demo_config(), Some(workdir)).expect("demo pipeline")
}

pub fn run_demo(workdir: &Path) -> RunReport {
    pipeline(workdir).run(StageSelection::All).expect("demo run")
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// Every file under `root`, keyed by its relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.unwrap();
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, read(entry.path()));
        }
    }
    out
}

pub fn manifests(workdir: &Path) -> BTreeMap<&'static str, Vec<u8>> {
    let w = Workdir::new(workdir).unwrap();
    Stage::ALL
        .iter()
        .map(|s| (s.name(), std::fs::read(w.manifest(*s)).unwrap_or_default()))
        .collect()
}
