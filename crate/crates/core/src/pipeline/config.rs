//! Run configuration: a TOML file naming inputs, services and pipeline settings.
//!
//! ```toml
//! [inputs]
//! taxonomy = "taxonomy.json"
//! search_backend = "fixture:search"
//! media_dir = "media"
//!
//! [services]
//! mode = "mock"          # or "http"
//! fixtures = "fixtures"  # mock tables
//! base_url = "http://127.0.0.1:8080"
//!
//! [pipeline]
//! ssim_threshold_T = 0.85
//! packing_strategy = "concat"
//! ```
//!
//! Relative paths resolve against the config file's directory.
//! `SERVICE_BASE_URL`, `SERVICE_TOKEN` and `WORKDIR` override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::PipelineConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub taxonomy: PathBuf,
    /// `fixture:<dir>` or `live:<url>`.
    pub search_backend: String,
    pub media_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceMode {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServicesConfig {
    pub mode: ServiceMode,
    pub fixtures: Option<PathBuf>,
    pub base_url: Option<String>,
    #[serde(skip)]
    pub token: Option<String>,
    pub max_in_flight: usize,
    pub remote_tokenizer: bool,
}

impl Default for ServicesConfig {
    fn default() -> Self {
        Self {
            mode: ServiceMode::Mock,
            fixtures: None,
            base_url: None,
            token: None,
            max_in_flight: 8,
            remote_tokenizer: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub workdir: Option<PathBuf>,
    /// Worker threads; 0 means one per CPU.
    pub workers: usize,
    /// Items processed between manifest commits.
    pub chunk_size: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            workdir: None,
            workers: 0,
            chunk_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub services: ServicesConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub run: RunSettings,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.inputs.taxonomy = resolve(base_dir, &cfg.inputs.taxonomy);
        cfg.inputs.media_dir = resolve(base_dir, &cfg.inputs.media_dir);
        if let Some(dir) = cfg.inputs.search_backend.strip_prefix("fixture:") {
            cfg.inputs.search_backend = format!("fixture:{}", resolve(base_dir, Path::new(dir)).display());
        }
        if let Some(f) = &cfg.services.fixtures {
            cfg.services.fixtures = Some(resolve(base_dir, f));
        }
        if let Some(w) = &cfg.run.workdir {
            cfg.run.workdir = Some(resolve(base_dir, w));
        }
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Applies `SERVICE_BASE_URL`, `SERVICE_TOKEN` and `WORKDIR`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get("SERVICE_BASE_URL").filter(|v| !v.is_empty()) {
            self.services.base_url = Some(url);
        }
        if let Some(token) = get("SERVICE_TOKEN").filter(|v| !v.is_empty()) {
            self.services.token = Some(token);
        }
        if let Some(dir) = get("WORKDIR").filter(|v| !v.is_empty()) {
            self.run.workdir = Some(PathBuf::from(dir));
        }
    }

    /// Checks that the selected service mode has what it needs.
    pub fn check_services(&self) -> Result<()> {
        match self.services.mode {
            ServiceMode::Mock if self.services.fixtures.is_none() => {
                Err(Error::Config("missing field `services.fixtures` for mock mode".into()))
            }
            ServiceMode::Http if self.services.base_url.is_none() => Err(Error::Config(
                "missing field `services.base_url` (or SERVICE_BASE_URL) for http mode".into(),
            )),
            _ => Ok(()),
        }
    }
}
