//! Stage orchestration over a working directory with resumable manifests.

mod config;
mod doctor;
mod runner;
mod stages;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{Inputs, RunConfig, RunSettings, ServiceMode, ServicesConfig};
pub use doctor::{doctor, doctor_default, Check, DoctorReport};
pub use runner::{Outcome, StageRunner, StageSummary, WorkItem};

use crate::corpus::{Clock, ManifestStore};
use crate::error::{Error, Result};
use crate::media::{AutoToolkit, MediaToolkit};
use crate::services::{FixtureTables, HttpServiceClient, ServiceSet};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Collect,
    Video,
    Clip,
    Frame,
    Assemble,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Collect,
        Stage::Video,
        Stage::Clip,
        Stage::Frame,
        Stage::Assemble,
        Stage::Metrics,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Video => "video",
            Stage::Clip => "clip",
            Stage::Frame => "frame",
            Stage::Assemble => "assemble",
            Stage::Metrics => "metrics",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

/// Stages to run: one, or all of them in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    One(Stage),
    All,
}

impl StageSelection {
    pub fn stages(&self) -> Vec<Stage> {
        match self {
            StageSelection::One(s) => vec![*s],
            StageSelection::All => Stage::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for StageSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(StageSelection::All)
        } else {
            s.parse().map(StageSelection::One)
        }
    }
}

/// Layout of a run's working directory. Paths stored in records are
/// relative to the root so outputs do not depend on where it lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: &Path) -> Result<Self> {
        let root = std::path::absolute(root).map_err(|e| Error::io(root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self, stage: Stage) -> PathBuf {
        self.root.join("manifests").join(format!("{}.jsonl", stage.name()))
    }

    pub fn search_results(&self) -> PathBuf {
        self.path("collect/search.jsonl")
    }

    pub fn video_meta_rel(video_id: &str) -> String {
        format!("collect/videos/{video_id}.json")
    }

    pub fn video_dir(&self, video_id: &str) -> PathBuf {
        self.root.join("video").join(video_id)
    }

    pub fn refined_rel(video_id: &str) -> String {
        format!("video/{video_id}/refined.json")
    }

    pub fn clip_dir(&self, video_id: &str) -> PathBuf {
        self.root.join("clip").join(video_id)
    }

    pub fn clips_rel(video_id: &str) -> String {
        format!("clip/{video_id}/clips.json")
    }

    pub fn keyframe_rel(video_id: &str, clip_id: &str, index: usize) -> String {
        format!("frames/{video_id}/{clip_id}/{index}.png")
    }

    pub fn keyframes_rel(video_id: &str) -> String {
        format!("frame/{video_id}/keyframes.json")
    }

    pub const CORPUS_REL: &'static str = "corpus/corpus.jsonl";
    pub const EXCLUSIONS_REL: &'static str = "corpus/exclusions.json";
    pub const REPORT_REL: &'static str = "metrics/report.json";
    pub const INSI_CSV_REL: &'static str = "metrics/insi_sim.csv";

    pub fn corpus(&self) -> PathBuf {
        self.path(Self::CORPUS_REL)
    }

    pub fn spool(&self) -> PathBuf {
        self.path("spool")
    }

    pub fn open_manifest(&self, stage: Stage) -> Result<ManifestStore> {
        ManifestStore::open(&self.manifest(stage), stage.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageSummary>,
}

impl RunReport {
    pub fn pending(&self) -> Vec<String> {
        self.stages
            .iter()
            .flat_map(|s| s.pending.iter().map(move |k| format!("{}:{k}", s.stage)))
            .collect()
    }
}

/// Builds the service clients the config asks for.
pub fn build_services(config: &RunConfig, workdir: &Workdir) -> Result<ServiceSet> {
    config.check_services()?;
    let judges = &config.pipeline.judges;
    match config.services.mode {
        ServiceMode::Mock => {
            let dir = config.services.fixtures.as_deref().expect("checked by check_services");
            Ok(ServiceSet::mock(FixtureTables::load(dir)?, judges))
        }
        ServiceMode::Http => {
            let url = config.services.base_url.clone().expect("checked by check_services");
            let client = HttpServiceClient::new(url, config.services.token.clone())
                .with_max_in_flight(config.services.max_in_flight.max(1));
            Ok(ServiceSet::http(client, judges, workdir.spool(), config.services.remote_tokenizer))
        }
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    pub workdir: Workdir,
    pub services: ServiceSet,
    pub toolkit: Arc<dyn MediaToolkit>,
    pub clock: Clock,
    /// Simulates a crash: the named stage stops after this many commits.
    pub abort_after: Option<(Stage, usize)>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// Uses `workdir`, else `run.workdir` from the config.
    pub fn new(config: RunConfig, workdir: Option<&Path>) -> Result<Self> {
        let root = workdir
            .map(Path::to_path_buf)
            .or_else(|| config.run.workdir.clone())
            .ok_or_else(|| Error::Config("missing field `run.workdir` (or WORKDIR / --workdir)".into()))?;
        let workdir = Workdir::new(&root)?;
        let services = build_services(&config, &workdir)?;
        Self::with_services(config, workdir, services, Arc::new(AutoToolkit::default()))
    }

    pub fn with_services(
        config: RunConfig,
        workdir: Workdir,
        services: ServiceSet,
        toolkit: Arc<dyn MediaToolkit>,
    ) -> Result<Self> {
        config.pipeline.validate()?;
        let clock = match config.services.mode {
            ServiceMode::Mock => Clock::deterministic(),
            ServiceMode::Http => Clock::Wall,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        util::ensure_dir(workdir.root())?;
        Ok(Self {
            config,
            workdir,
            services,
            toolkit,
            clock,
            abort_after: None,
            pool,
        })
    }

    /// Runs the selected stages in order. Items left pending are reported;
    /// failed items end the run with [`Error::Stage`].
    pub fn run(&self, selection: StageSelection) -> Result<RunReport> {
        let mut report = RunReport::default();
        for stage in selection.stages() {
            let summary = self.pool.install(|| self.run_stage(stage))?;
            tracing::info!(
                stage = stage.name(),
                done = summary.done,
                dropped = summary.dropped,
                skipped = summary.skipped,
                pending = summary.pending.len(),
                failed = summary.failed.len(),
                "stage finished"
            );
            if !summary.failed.is_empty() {
                return Err(Error::Stage {
                    stage: stage.name().to_string(),
                    keys: summary.failed,
                });
            }
            report.stages.push(summary);
        }
        Ok(report)
    }

    fn runner<'a>(&'a self, stage: Stage, store: &'a mut ManifestStore) -> StageRunner<'a> {
        StageRunner {
            stage: stage.name(),
            store,
            clock: &self.clock,
            chunk_size: self.config.run.chunk_size,
            abort_after: self.abort_after.filter(|(s, _)| *s == stage).map(|(_, n)| n),
        }
    }

    fn run_stage(&self, stage: Stage) -> Result<StageSummary> {
        match stage {
            Stage::Collect => self.collect_stage(),
            Stage::Video => self.video_stage(),
            Stage::Clip => self.clip_stage(),
            Stage::Frame => self.frame_stage(),
            Stage::Assemble => self.assemble_stage(),
            Stage::Metrics => self.metrics_stage(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("all".parse::<StageSelection>().unwrap().stages().len(), 6);
        assert!("nope".parse::<StageSelection>().is_err());
    }

    #[test]
    fn workdir_is_absolute() {
        let w = Workdir::new(Path::new("rel/dir")).unwrap();
        assert!(w.root().is_absolute());
        assert!(w.manifest(Stage::Frame).ends_with("manifests/frame.jsonl"));
    }
}
