//! Append-only per-stage manifests that make reruns skip finished work.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub input_key: String,
    pub input_hash: String,
    #[serde(default)]
    pub output_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_reason: Option<String>,
    pub completed_at: String,
    /// Stage-specific annotations (drop details, flags, summaries).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ManifestEntry {
    pub fn is_terminal(&self) -> bool {
        !self.output_keys.is_empty() || self.drop_reason.is_some()
    }
}

/// In-memory view of one stage's manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stage_name: String,
    pub entries: Vec<ManifestEntry>,
}

/// Source of `completed_at` values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clock {
    Wall,
    /// Every entry gets the same timestamp; used for reproducible runs.
    Fixed(String),
}

impl Clock {
    pub fn deterministic() -> Self {
        Clock::Fixed("1970-01-01T00:00:00Z".to_string())
    }

    pub fn now(&self) -> String {
        match self {
            Clock::Wall => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            Clock::Fixed(ts) => ts.clone(),
        }
    }
}

/// File-backed manifest: one JSON entry per line, appended as items finish.
#[derive(Debug)]
pub struct ManifestStore {
    path: PathBuf,
    manifest: PipelineManifest,
    index: HashMap<String, usize>,
}

impl ManifestStore {
    /// Loads the manifest, discarding a torn trailing line left by a crash.
    pub fn open(path: &Path, stage_name: &str) -> Result<Self> {
        let mut entries = Vec::new();
        if path.exists() {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let complete_len = raw.rfind('\n').map(|i| i + 1).unwrap_or(0);
            for (idx, line) in raw[..complete_len].lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: ManifestEntry = serde_json::from_str(line)
                    .map_err(|e| Error::json(format!("{}:{}", path.display(), idx + 1), e))?;
                entries.push(entry);
            }
            if complete_len < raw.len() {
                tracing::warn!(path = %path.display(), "discarding torn manifest line");
                util::write_atomic(path, raw[..complete_len].as_bytes())?;
            }
        }
        let mut store = Self {
            path: path.to_path_buf(),
            manifest: PipelineManifest {
                stage_name: stage_name.to_string(),
                entries: Vec::new(),
            },
            index: HashMap::new(),
        };
        for entry in entries {
            // later lines win if a key was ever written twice
            if let Some(&pos) = store.index.get(&entry.input_key) {
                store.manifest.entries[pos] = entry;
            } else {
                store.index.insert(entry.input_key.clone(), store.manifest.entries.len());
                store.manifest.entries.push(entry);
            }
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn manifest(&self) -> &PipelineManifest {
        &self.manifest
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.manifest.entries
    }

    pub fn get(&self, input_key: &str) -> Option<&ManifestEntry> {
        self.index.get(input_key).map(|&i| &self.manifest.entries[i])
    }

    /// True when the key finished with exactly this input hash.
    pub fn is_complete(&self, input_key: &str, input_hash: &str) -> bool {
        self.get(input_key)
            .is_some_and(|e| e.input_hash == input_hash && e.is_terminal())
    }

    /// Drops entries for `keys` and rewrites the file.
    pub fn remove(&mut self, keys: &[String]) -> Result<()> {
        if keys.iter().all(|k| !self.index.contains_key(k)) {
            return Ok(());
        }
        self.manifest.entries.retain(|e| !keys.contains(&e.input_key));
        self.index = self
            .manifest
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.input_key.clone(), i))
            .collect();
        util::write_jsonl_atomic(&self.path, &self.manifest.entries)
    }

    pub fn append(&mut self, entry: ManifestEntry) -> Result<()> {
        if !entry.is_terminal() {
            return Err(Error::Validation(format!(
                "manifest entry {} has neither outputs nor a drop reason",
                entry.input_key
            )));
        }
        if self.index.contains_key(&entry.input_key) {
            return Err(Error::Validation(format!(
                "manifest for stage {} already has an entry for {}",
                self.manifest.stage_name, entry.input_key
            )));
        }
        if let Some(parent) = self.path.parent() {
            util::ensure_dir(parent)?;
        }
        let mut line =
            serde_json::to_vec(&entry).map_err(|e| Error::json(entry.input_key.clone(), e))?;
        line.push(b'\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        self.index.insert(entry.input_key.clone(), self.manifest.entries.len());
        self.manifest.entries.push(entry);
        Ok(())
    }
}
