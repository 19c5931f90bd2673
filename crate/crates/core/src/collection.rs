//! Knowledge taxonomy, search-query expansion, video-id dedup and metadata review.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{KnowledgePoint, VideoMeta};
use crate::error::{Error, Result};
use crate::services::{ContentFlag, ServiceError, TranscriptJudge};
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub subjects: Vec<Subject>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub name: String,
    pub courses: Vec<Course>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Course {
    pub name: String,
    pub sub_courses: Vec<SubCourse>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubCourse {
    pub name: String,
    pub points: Vec<String>,
}

impl Taxonomy {
    pub fn points(&self) -> Vec<KnowledgePoint> {
        let mut out = Vec::new();
        for s in &self.subjects {
            for c in &s.courses {
                for sc in &c.sub_courses {
                    for p in &sc.points {
                        out.push(KnowledgePoint::new(&s.name, &c.name, &sc.name, p));
                    }
                }
            }
        }
        out
    }

    pub fn n_courses(&self) -> usize {
        self.subjects.iter().map(|s| s.courses.len()).sum()
    }

    /// Rejects empty layer names and duplicate point ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for point in self.points() {
            for (layer, name) in ["subject", "course", "sub_course", "point"].iter().zip(point.layers()) {
                if name.trim().is_empty() {
                    return Err(Error::Validation(format!(
                        "missing {layer} name under `{}`",
                        point.id()
                    )));
                }
            }
            let id = point.id();
            if !seen.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate knowledge point `{id}`")));
            }
        }
        for s in &self.subjects {
            if s.name.trim().is_empty() {
                return Err(Error::Validation("missing subject name".into()));
            }
            for c in &s.courses {
                if c.name.trim().is_empty() {
                    return Err(Error::Validation(format!("missing course name under `{}`", s.name)));
                }
                for sc in &c.sub_courses {
                    if sc.name.trim().is_empty() {
                        return Err(Error::Validation(format!(
                            "missing sub_course name under `{}/{}`",
                            s.name, c.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let taxonomy: Taxonomy = util::read_json(path)?;
    taxonomy.validate()?;
    Ok(taxonomy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub point: KnowledgePoint,
    pub query: String,
}

impl SearchQuery {
    pub fn point_id(&self) -> String {
        self.point.id()
    }
}

/// One query per leaf point: `"{sub_course}: {point}"`.
pub fn expand_queries(taxonomy: &Taxonomy) -> Vec<SearchQuery> {
    taxonomy
        .points()
        .into_iter()
        .map(|point| SearchQuery {
            query: format!("{}: {}", point.sub_course, point.point),
            point,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub point_id: String,
    pub rank: usize,
    pub meta: VideoMeta,
}

pub trait SearchBackend: Send + Sync {
    /// Ranked results for `query`, best first.
    fn search(&self, query: &str) -> Result<Vec<VideoMeta>>;
}

/// Canned results from `search.json`, a map from query string to metadata list.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearchBackend {
    results: BTreeMap<String, Vec<VideoMeta>>,
}

impl FixtureSearchBackend {
    pub fn new(results: BTreeMap<String, Vec<VideoMeta>>) -> Self {
        Self { results }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self::new(util::read_json(&dir.join("search.json"))?))
    }
}

impl SearchBackend for FixtureSearchBackend {
    fn search(&self, query: &str) -> Result<Vec<VideoMeta>> {
        Ok(self.results.get(query).cloned().unwrap_or_default())
    }
}

#[derive(Serialize)]
struct LiveQuery<'a> {
    query: &'a str,
}

#[derive(Deserialize)]
struct LiveAnswer {
    results: Vec<VideoMeta>,
}

/// Search proxy speaking `POST {query} -> {results: [VideoMeta]}`.
pub struct LiveSearchBackend {
    agent: ureq::Agent,
    url: String,
}

impl LiveSearchBackend {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            agent: ureq::Agent::new_with_defaults(),
            url: url.into(),
        }
    }
}

impl SearchBackend for LiveSearchBackend {
    fn search(&self, query: &str) -> Result<Vec<VideoMeta>> {
        let body = serde_json::to_vec(&LiveQuery { query }).map_err(|e| Error::json("search query", e))?;
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(|e| ServiceError::Transport(format!("search: {e}")))?;
        let bytes = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| ServiceError::Transport(format!("search: {e}")))?;
        let answer: LiveAnswer = serde_json::from_slice(&bytes).map_err(|e| Error::json("search answer", e))?;
        Ok(answer.results)
    }
}

/// `fixture:<dir>` or `live:<url>`.
pub fn backend_from_spec(spec: &str) -> Result<Box<dyn SearchBackend>> {
    match spec.split_once(':') {
        Some(("fixture", dir)) => Ok(Box::new(FixtureSearchBackend::load(&PathBuf::from(dir))?)),
        Some(("live", url)) if !url.is_empty() => Ok(Box::new(LiveSearchBackend::new(url))),
        _ => Err(Error::Config(format!(
            "search backend `{spec}` must be `fixture:<dir>` or `live:<url>`"
        ))),
    }
}

/// Runs every query and keeps the first `top_k` results of each, stamping
/// rank and source point. Queries run in parallel; output follows query order.
pub fn search_all(backend: &dyn SearchBackend, queries: &[SearchQuery], top_k: usize) -> Result<Vec<SearchResult>> {
    let per_query: Vec<Result<Vec<SearchResult>>> = queries
        .par_iter()
        .map(|q| {
            let point_id = q.point_id();
            let metas = backend.search(&q.query)?;
            Ok(metas
                .into_iter()
                .take(top_k)
                .enumerate()
                .map(|(i, mut meta)| {
                    meta.source_point = point_id.clone();
                    SearchResult {
                        point_id: point_id.clone(),
                        rank: i + 1,
                        meta,
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_query {
        out.extend(r?);
    }
    Ok(out)
}

/// Keeps the first result for each video id. Returns `(kept, dropped)`.
pub fn dedup_by_video_id(results: Vec<SearchResult>) -> (Vec<SearchResult>, Vec<SearchResult>) {
    let mut seen = HashSet::new();
    results
        .into_iter()
        .partition(|r| seen.insert(r.meta.video_id.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaDropReason {
    Irrelevant,
    Inappropriate,
    Illegal,
    Other,
}

impl MetaDropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetaDropReason::Irrelevant => "irrelevant",
            MetaDropReason::Inappropriate => "inappropriate",
            MetaDropReason::Illegal => "illegal",
            MetaDropReason::Other => "other",
        }
    }
}

impl From<ContentFlag> for MetaDropReason {
    fn from(flag: ContentFlag) -> Self {
        match flag {
            ContentFlag::Inappropriate => MetaDropReason::Inappropriate,
            ContentFlag::Illegal => MetaDropReason::Illegal,
            ContentFlag::Other => MetaDropReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetaDecision {
    Keep,
    Drop(MetaDropReason),
    /// No reviewer answered; retried on the next run.
    Pending(String),
}

/// Asks the first reviewer that answers whether the metadata fits `point`.
/// A content flag drops the video; otherwise relevance below `threshold` does.
pub fn filter_metadata(
    meta: &VideoMeta,
    point: &KnowledgePoint,
    reviewers: &[std::sync::Arc<dyn TranscriptJudge>],
    threshold: u8,
) -> Result<MetaDecision> {
    if meta.title.trim().is_empty() {
        return Err(Error::Validation(format!("video {} has no title", meta.video_id)));
    }
    let mut last = String::from("no reviewer configured");
    for reviewer in reviewers {
        match reviewer.score_transcript(&meta.review_text(), point) {
            Ok(scores) => {
                return Ok(match scores.content_flag {
                    Some(flag) => MetaDecision::Drop(flag.into()),
                    None if scores.relevance < threshold => MetaDecision::Drop(MetaDropReason::Irrelevant),
                    None => MetaDecision::Keep,
                });
            }
            Err(e) => {
                tracing::warn!(video_id = %meta.video_id, judge = reviewer.judge_id(), error = %e, "metadata review failed");
                last = e.to_string();
            }
        }
    }
    Ok(MetaDecision::Pending(last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::mock::MockJudge;
    use crate::services::{CriteriaScores, FixtureTables, ServiceResult};
    use std::sync::Arc;

    fn minimal() -> Taxonomy {
        Taxonomy {
            subjects: vec![Subject {
                name: "Mathematics".into(),
                courses: vec![Course {
                    name: "Elementary Mathematics".into(),
                    sub_courses: vec![SubCourse {
                        name: "Rational and Irrational Numbers".into(),
                        points: vec!["the definition of Irrational Numbers".into()],
                    }],
                }],
            }],
        }
    }

    fn meta(id: &str, title: &str) -> VideoMeta {
        VideoMeta {
            video_id: id.into(),
            title: title.into(),
            description: String::new(),
            comments: vec![],
            duration_s: 60.0,
            language: "en".into(),
            source_point: String::new(),
        }
    }

    fn result(id: &str) -> SearchResult {
        SearchResult {
            point_id: "p".into(),
            rank: 1,
            meta: meta(id, "t"),
        }
    }

    #[test]
    fn minimal_taxonomy_has_one_leaf() {
        let t = minimal();
        t.validate().unwrap();
        assert_eq!(t.points().len(), 1);
    }

    #[test]
    fn query_prefixes_sub_course() {
        let q = expand_queries(&minimal());
        assert_eq!(
            q[0].query,
            "Rational and Irrational Numbers: the definition of Irrational Numbers"
        );
        assert!(expand_queries(&Taxonomy { subjects: vec![] }).is_empty());
    }

    #[test]
    fn duplicate_leaf_is_named() {
        let mut t = minimal();
        t.subjects[0].courses[0].sub_courses[0]
            .points
            .push("the definition of Irrational Numbers".into());
        let err = t.validate().unwrap_err().to_string();
        assert!(err.contains("the definition of Irrational Numbers"), "{err}");
    }

    #[test]
    fn missing_layer_is_rejected() {
        let mut t = minimal();
        t.subjects[0].courses[0].name = " ".into();
        assert!(matches!(t.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let (kept, dropped) = dedup_by_video_id(vec![result("a"), result("b"), result("a")]);
        let ids: Vec<_> = kept.iter().map(|r| r.meta.video_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(dropped.len(), 1);
        let (again, none) = dedup_by_video_id(kept.clone());
        assert_eq!(again, kept);
        assert!(none.is_empty());
    }

    #[test]
    fn search_truncates_to_top_k_and_ranks() {
        let q = expand_queries(&minimal());
        let hits: Vec<_> = (0..60).map(|i| meta(&format!("v{i}"), "t")).collect();
        let backend = FixtureSearchBackend::new(BTreeMap::from([(q[0].query.clone(), hits)]));
        let results = search_all(&backend, &q, 50).unwrap();
        assert_eq!(results.len(), 50);
        assert_eq!(results[49].rank, 50);
        assert_eq!(results[0].meta.source_point, q[0].point_id());
    }

    #[test]
    fn metadata_review_with_mock_judge() {
        let point = minimal().points().remove(0);
        let judge: Arc<dyn TranscriptJudge> = Arc::new(MockJudge::new("judge-a", Arc::new(FixtureTables::default())));
        let mut lecture = meta("l", "Irrational numbers explained");
        lecture.description = "The definition of rational and irrational numbers".into();
        let cooking = meta("c", "Grandma's lasagna recipe");
        assert_eq!(
            filter_metadata(&lecture, &point, &[judge.clone()], 3).unwrap(),
            MetaDecision::Keep
        );
        assert_eq!(
            filter_metadata(&cooking, &point, &[judge], 3).unwrap(),
            MetaDecision::Drop(MetaDropReason::Irrelevant)
        );
    }

    struct Unreachable;

    impl TranscriptJudge for Unreachable {
        fn judge_id(&self) -> &str {
            "down"
        }
        fn score_transcript(&self, _: &str, _: &KnowledgePoint) -> ServiceResult<CriteriaScores> {
            Err(ServiceError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn unreachable_reviewer_leaves_item_pending() {
        let point = minimal().points().remove(0);
        let d = filter_metadata(&meta("x", "title"), &point, &[Arc::new(Unreachable)], 3).unwrap();
        assert!(matches!(d, MetaDecision::Pending(_)));
    }
}
