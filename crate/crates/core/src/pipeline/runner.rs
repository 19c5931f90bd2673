//! Manifest-backed item loop shared by every stage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Clock, ManifestEntry, ManifestStore};
use crate::error::{Error, Result};

/// One unit of stage work. `hash` covers everything the result depends on.
#[derive(Debug, Clone)]
pub struct WorkItem<T> {
    pub key: String,
    pub hash: String,
    pub payload: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done {
        outputs: Vec<String>,
        detail: Option<serde_json::Value>,
    },
    Dropped {
        reason: String,
        detail: Option<serde_json::Value>,
    },
    /// Left without a manifest entry so the next run retries it.
    Pending(String),
    Failed(String),
}

impl Outcome {
    pub fn done(outputs: Vec<String>) -> Self {
        Outcome::Done { outputs, detail: None }
    }

    pub fn dropped(reason: impl Into<String>) -> Self {
        Outcome::Dropped {
            reason: reason.into(),
            detail: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub skipped: usize,
    pub done: usize,
    pub dropped: usize,
    pub pending: Vec<String>,
    pub failed: Vec<String>,
}

impl StageSummary {
    pub fn committed(&self) -> usize {
        self.done + self.dropped
    }
}

pub struct StageRunner<'a> {
    pub stage: &'a str,
    pub store: &'a mut ManifestStore,
    pub clock: &'a Clock,
    pub chunk_size: usize,
    /// Stop with [`Error::Aborted`] once this many items were committed.
    pub abort_after: Option<usize>,
}

impl StageRunner<'_> {
    /// Runs `work` over items not yet complete with the same hash. Chunks run
    /// in parallel; results commit in input order through this one writer.
    pub fn run<T: Sync>(
        self,
        items: &[WorkItem<T>],
        work: impl Fn(&WorkItem<T>) -> Outcome + Sync,
    ) -> Result<StageSummary> {
        let mut summary = StageSummary {
            stage: self.stage.to_string(),
            ..StageSummary::default()
        };
        let stale: Vec<String> = items
            .iter()
            .filter(|i| self.store.get(&i.key).is_some_and(|e| e.input_hash != i.hash))
            .map(|i| i.key.clone())
            .collect();
        self.store.remove(&stale)?;

        let todo: Vec<&WorkItem<T>> = items
            .iter()
            .filter(|i| {
                let complete = self.store.is_complete(&i.key, &i.hash);
                if complete {
                    summary.skipped += 1;
                }
                !complete
            })
            .collect();

        for chunk in todo.chunks(self.chunk_size.max(1)) {
            let outcomes: Vec<Outcome> = chunk.par_iter().map(|i| work(i)).collect();
            for (item, outcome) in chunk.iter().zip(outcomes) {
                if let Some(limit) = self.abort_after {
                    if summary.committed() >= limit {
                        return Err(Error::Aborted {
                            stage: self.stage.to_string(),
                            committed: summary.committed(),
                        });
                    }
                }
                let entry = |outputs: Vec<String>, drop_reason: Option<String>, detail| ManifestEntry {
                    input_key: item.key.clone(),
                    input_hash: item.hash.clone(),
                    output_keys: outputs,
                    drop_reason,
                    completed_at: self.clock.now(),
                    detail,
                };
                match outcome {
                    Outcome::Done { outputs, detail } => {
                        tracing::info!(stage = self.stage, key = %item.key, outcome = "kept");
                        self.store.append(entry(outputs, None, detail))?;
                        summary.done += 1;
                    }
                    Outcome::Dropped { reason, detail } => {
                        tracing::info!(stage = self.stage, key = %item.key, outcome = "dropped", %reason);
                        self.store.append(entry(Vec::new(), Some(reason), detail))?;
                        summary.dropped += 1;
                    }
                    Outcome::Pending(reason) => {
                        tracing::info!(stage = self.stage, key = %item.key, outcome = "pending", %reason);
                        summary.pending.push(item.key.clone());
                    }
                    Outcome::Failed(reason) => {
                        tracing::error!(stage = self.stage, key = %item.key, outcome = "failed", %reason);
                        summary.failed.push(item.key.clone());
                    }
                }
            }
        }
        if let Some(limit) = self.abort_after {
            if summary.committed() >= limit && summary.committed() > 0 {
                return Err(Error::Aborted {
                    stage: self.stage.to_string(),
                    committed: summary.committed(),
                });
            }
        }
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn items(n: usize, hash: &str) -> Vec<WorkItem<usize>> {
        (0..n)
            .map(|i| WorkItem {
                key: format!("k{i}"),
                hash: hash.into(),
                payload: i,
            })
            .collect()
    }

    fn work(item: &WorkItem<usize>) -> Outcome {
        match item.payload % 4 {
            0 => Outcome::done(vec![format!("out{}", item.payload)]),
            1 => Outcome::dropped("odd"),
            2 => Outcome::Pending("later".into()),
            _ => Outcome::Failed("boom".into()),
        }
    }

    #[test]
    fn outcomes_and_skip_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let clock = Clock::deterministic();
        let mut store = ManifestStore::open(&path, "s").unwrap();
        let runner = StageRunner {
            stage: "s",
            store: &mut store,
            clock: &clock,
            chunk_size: 3,
            abort_after: None,
        };
        let s = runner.run(&items(8, "h"), work).unwrap();
        assert_eq!((s.done, s.dropped, s.skipped), (2, 2, 0));
        assert_eq!(s.pending, vec!["k2", "k6"]);
        assert_eq!(s.failed, vec!["k3", "k7"]);
        let keys: Vec<_> = store.entries().iter().map(|e| e.input_key.as_str()).collect();
        assert_eq!(keys, ["k0", "k1", "k4", "k5"]);

        let calls = AtomicUsize::new(0);
        let runner = StageRunner {
            stage: "s",
            store: &mut store,
            clock: &clock,
            chunk_size: 3,
            abort_after: None,
        };
        let s = runner
            .run(&items(8, "h"), |i| {
                calls.fetch_add(1, Ordering::SeqCst);
                work(i)
            })
            .unwrap();
        assert_eq!(s.skipped, 4);
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn changed_hash_reprocesses() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Clock::deterministic();
        let mut store = ManifestStore::open(&dir.path().join("m.jsonl"), "s").unwrap();
        let run = |store: &mut ManifestStore, hash: &str| {
            StageRunner {
                stage: "s",
                store,
                clock: &clock,
                chunk_size: 2,
                abort_after: None,
            }
            .run(&items(1, hash), work)
            .unwrap()
        };
        assert_eq!(run(&mut store, "a").done, 1);
        assert_eq!(run(&mut store, "a").skipped, 1);
        assert_eq!(run(&mut store, "b").done, 1);
        assert_eq!(store.entries().len(), 1);
        assert_eq!(store.entries()[0].input_hash, "b");
    }

    #[test]
    fn abort_keeps_committed_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let clock = Clock::deterministic();
        let mut store = ManifestStore::open(&path, "s").unwrap();
        let all_done = |i: &WorkItem<usize>| Outcome::done(vec![i.key.clone()]);
        let err = StageRunner {
            stage: "s",
            store: &mut store,
            clock: &clock,
            chunk_size: 4,
            abort_after: Some(2),
        }
        .run(&items(5, "h"), all_done)
        .unwrap_err();
        assert!(matches!(err, Error::Aborted { committed: 2, .. }));
        let mut store = ManifestStore::open(&path, "s").unwrap();
        assert_eq!(store.entries().len(), 2);
        let s = StageRunner {
            stage: "s",
            store: &mut store,
            clock: &clock,
            chunk_size: 4,
            abort_after: None,
        }
        .run(&items(5, "h"), all_done)
        .unwrap();
        assert_eq!((s.skipped, s.done), (2, 3));
    }
}
