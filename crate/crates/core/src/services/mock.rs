//! Deterministic offline stand-ins for every service.
//!
//! Mocks that must recognize media (speech, captions, OCR) look their answer
//! up in [`FixtureTables`] keyed by content digests; the others apply fixed
//! rules. Identical inputs always give identical outputs.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::GrayImage;
use serde::{Deserialize, Serialize};
use sha2::Digest;

use super::{
    require_text, ClipCaptioner, ContentFlag, CriteriaScores, EmbeddingVector, FrameEmbedder, OcrEngine,
    OcrResult, ServiceError, ServiceResult, SpeechRecognizer, TextEmbedder, TextRefiner, TranscriptJudge,
    Transcription, UnigramModel,
};
use crate::corpus::KnowledgePoint;
use crate::error::{Error, Result};
use crate::media::{frame_digest, load_gray, wav_sample_count, wav_sample_digest};
use crate::util::{self, sha256_hex};

/// Tokens the mock refiner deletes.
pub const FILLERS: &[&str] = &["um", "uh", "uhm", "erm", "er", "ah", "hmm", "mm"];

/// Tokens the mock judge treats as carrying no knowledge.
const LOW_CONTENT: &[&str] = &["like", "yeah", "okay", "ok", "basically", "actually", "right"];

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "with", "from", "into", "what", "how", "are", "its", "this", "that", "their",
];

const INAPPROPRIATE_TERMS: &[&str] = &["nsfw", "explicit", "porn", "gore"];
const ILLEGAL_TERMS: &[&str] = &["pirated", "piracy", "torrent", "cracked"];

/// Clean expository text the mock perplexity model is fit on when no
/// reference corpus is supplied.
pub const DEFAULT_PPL_REFERENCE: &str = include_str!("ppl_reference.txt");

/// Lowercased word with surrounding punctuation removed.
pub fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_word)
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub relevance: u8,
    pub knowledge_density: u8,
    pub transcription_quality: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_flag: Option<ContentFlag>,
}

/// Scripted answers, stored as one JSON file per service in a fixture directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureTables {
    /// Audio sample digest -> transcript.
    pub transcripts: BTreeMap<String, Transcription>,
    /// Digest of the caption frame digests -> caption.
    pub captions: BTreeMap<String, String>,
    /// Frame digest -> OCR answer.
    pub ocr: BTreeMap<String, OcrResult>,
    /// `sha256(text)` or `judge_id:sha256(text)` -> scores.
    pub scores: BTreeMap<String, ScoreEntry>,
    pub ppl_reference: Option<String>,
}

const TRANSCRIPTS_FILE: &str = "transcripts.json";
const CAPTIONS_FILE: &str = "captions.json";
const OCR_FILE: &str = "ocr.json";
const SCORES_FILE: &str = "scores.json";
const PPL_FILE: &str = "ppl_reference.txt";

impl FixtureTables {
    pub fn load(dir: &Path) -> Result<Self> {
        fn opt<T: serde::de::DeserializeOwned + Default>(path: PathBuf) -> Result<T> {
            if path.is_file() {
                util::read_json(&path)
            } else {
                Ok(T::default())
            }
        }
        let ppl_path = dir.join(PPL_FILE);
        let ppl_reference = if ppl_path.is_file() {
            Some(std::fs::read_to_string(&ppl_path).map_err(|e| Error::io(&ppl_path, e))?)
        } else {
            None
        };
        if !dir.is_dir() {
            return Err(Error::Config(format!("fixture directory {} does not exist", dir.display())));
        }
        Ok(Self {
            transcripts: opt(dir.join(TRANSCRIPTS_FILE))?,
            captions: opt(dir.join(CAPTIONS_FILE))?,
            ocr: opt(dir.join(OCR_FILE))?,
            scores: opt(dir.join(SCORES_FILE))?,
            ppl_reference,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        util::write_json_atomic(&dir.join(TRANSCRIPTS_FILE), &self.transcripts)?;
        util::write_json_atomic(&dir.join(CAPTIONS_FILE), &self.captions)?;
        util::write_json_atomic(&dir.join(OCR_FILE), &self.ocr)?;
        util::write_json_atomic(&dir.join(SCORES_FILE), &self.scores)?;
        if let Some(text) = &self.ppl_reference {
            util::write_atomic(&dir.join(PPL_FILE), text.as_bytes())?;
        }
        Ok(())
    }

    pub fn unigram_model(&self) -> UnigramModel {
        UnigramModel::fit(
            self.ppl_reference.as_deref().unwrap_or(DEFAULT_PPL_REFERENCE),
            1.0,
        )
    }

    pub fn caption_key(frame_digests: &[String]) -> String {
        sha256_hex(frame_digests.join(","))
    }

    pub fn score_key(text: &str) -> String {
        sha256_hex(text)
    }
}

/// Plays back scripted transcripts keyed by the audio's sample digest.
pub struct MockRecognizer {
    tables: Arc<FixtureTables>,
}

impl MockRecognizer {
    pub fn new(tables: Arc<FixtureTables>) -> Self {
        Self { tables }
    }
}

impl SpeechRecognizer for MockRecognizer {
    fn transcribe(&self, audio_ref: &Path) -> ServiceResult<Transcription> {
        let unreadable = |e: crate::media::MediaError| ServiceError::InvalidArgument(e.to_string());
        if wav_sample_count(audio_ref).map_err(unreadable)? == 0 {
            return Ok(Transcription::empty());
        }
        let digest = wav_sample_digest(audio_ref).map_err(unreadable)?;
        let t = self
            .tables
            .transcripts
            .get(&digest)
            .cloned()
            .ok_or_else(|| ServiceError::Protocol(format!("no scripted transcript for audio {digest}")))?;
        t.check()?;
        Ok(t)
    }
}

/// Removes filler tokens and stutters, then collapses whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockRefiner;

pub fn strip_fillers(text: &str) -> String {
    let mut kept: Vec<&str> = Vec::new();
    let mut last_key = String::new();
    for word in text.split_whitespace() {
        let key = normalize_word(word);
        if FILLERS.contains(&key.as_str()) {
            continue;
        }
        if !key.is_empty() && key == last_key {
            continue;
        }
        last_key = key;
        kept.push(word);
    }
    kept.join(" ")
}

impl TextRefiner for MockRefiner {
    fn refine_text(&self, text: &str) -> ServiceResult<String> {
        require_text(text, "refine")?;
        let refined = strip_fillers(text);
        if refined.is_empty() {
            Ok(text.split_whitespace().collect::<Vec<_>>().join(" "))
        } else {
            Ok(refined)
        }
    }
}

/// Scores from the fixture table when present, otherwise from word statistics.
pub struct MockJudge {
    judge_id: String,
    tables: Arc<FixtureTables>,
}

impl MockJudge {
    pub fn new(judge_id: impl Into<String>, tables: Arc<FixtureTables>) -> Self {
        Self {
            judge_id: judge_id.into(),
            tables,
        }
    }
}

fn point_terms(point: &KnowledgePoint) -> Vec<String> {
    let mut terms: Vec<String> = words(&format!("{} {}", point.sub_course, point.point))
        .into_iter()
        .filter(|w| w.chars().count() >= 3 && !STOPWORDS.contains(&w.as_str()))
        .collect();
    terms.sort();
    terms.dedup();
    terms
}

fn to_score(x: f64) -> u8 {
    x.round().clamp(1.0, 5.0) as u8
}

/// Word-statistics judgment used when no fixture entry matches.
pub fn heuristic_scores(text: &str, point: &KnowledgePoint) -> ScoreEntry {
    let tokens = words(text);
    let terms = point_terms(point);
    let relevance = if terms.is_empty() {
        3
    } else {
        let matched = terms.iter().filter(|t| tokens.contains(t)).count();
        to_score(1.0 + 4.0 * matched as f64 / terms.len() as f64)
    };

    let knowledge_density = if tokens.is_empty() {
        1
    } else {
        let fillers = tokens
            .iter()
            .filter(|t| FILLERS.contains(&t.as_str()) || LOW_CONTENT.contains(&t.as_str()))
            .count();
        let ratio = fillers as f64 / tokens.len() as f64;
        if ratio > 0.5 {
            1
        } else {
            to_score(5.0 - 10.0 * ratio).max(2)
        }
    };

    let transcription_quality = if tokens.len() < 3 {
        if tokens.is_empty() { 1 } else { 3 }
    } else {
        let trigrams: Vec<_> = tokens.windows(3).collect();
        let mut seen = std::collections::HashSet::new();
        let repeats = trigrams.iter().filter(|t| !seen.insert(**t)).count();
        to_score(5.0 - 10.0 * repeats as f64 / trigrams.len() as f64)
    };

    let content_flag = if tokens.iter().any(|t| INAPPROPRIATE_TERMS.contains(&t.as_str())) {
        Some(ContentFlag::Inappropriate)
    } else if tokens.iter().any(|t| ILLEGAL_TERMS.contains(&t.as_str())) {
        Some(ContentFlag::Illegal)
    } else {
        None
    };

    ScoreEntry {
        relevance,
        knowledge_density,
        transcription_quality,
        content_flag,
    }
}

impl TranscriptJudge for MockJudge {
    fn judge_id(&self) -> &str {
        &self.judge_id
    }

    fn score_transcript(&self, text: &str, point: &KnowledgePoint) -> ServiceResult<CriteriaScores> {
        require_text(text, "score")?;
        let key = FixtureTables::score_key(text);
        let entry = self
            .tables
            .scores
            .get(&format!("{}:{key}", self.judge_id))
            .or_else(|| self.tables.scores.get(&key))
            .cloned()
            .unwrap_or_else(|| heuristic_scores(text, point));
        let scores = CriteriaScores {
            relevance: entry.relevance,
            knowledge_density: entry.knowledge_density,
            transcription_quality: entry.transcription_quality,
            judge_id: self.judge_id.clone(),
            content_flag: entry.content_flag,
        };
        scores.check()?;
        Ok(scores)
    }
}

/// Captions are looked up by the digest of the frames' pixel digests; an
/// unknown clip gets the digest itself as its caption.
pub struct MockCaptioner {
    tables: Arc<FixtureTables>,
}

impl MockCaptioner {
    pub fn new(tables: Arc<FixtureTables>) -> Self {
        Self { tables }
    }
}

impl ClipCaptioner for MockCaptioner {
    fn caption_clip(&self, frame_refs: &[PathBuf]) -> ServiceResult<String> {
        if frame_refs.is_empty() {
            return Err(ServiceError::InvalidArgument("caption requires at least one frame".into()));
        }
        let digests = frame_refs
            .iter()
            .map(|p| {
                load_gray(p)
                    .map(|img| frame_digest(&img))
                    .map_err(|e| ServiceError::InvalidArgument(e.to_string()))
            })
            .collect::<ServiceResult<Vec<_>>>()?;
        let key = FixtureTables::caption_key(&digests);
        Ok(self.tables.captions.get(&key).cloned().unwrap_or(key))
    }
}

/// Bag of words hashed into a fixed number of non-negative buckets.
#[derive(Debug, Clone, Copy)]
pub struct HashedBagOfWords {
    pub dim: usize,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self { dim: 1024 }
    }
}

impl HashedBagOfWords {
    pub fn bucket(&self, word: &str) -> usize {
        let digest = sha2::Sha256::digest(word.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dim as u64) as usize
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dim];
        let tokens = words(text);
        if tokens.is_empty() {
            values[0] = 1.0;
        }
        for t in tokens {
            values[self.bucket(&t)] += 1.0;
        }
        EmbeddingVector::normalized(values).expect("at least one bucket is non-zero")
    }
}

impl TextEmbedder for HashedBagOfWords {
    fn embed_texts(&self, texts: &[String]) -> ServiceResult<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| {
                require_text(t, "embed")?;
                Ok(self.embed(t))
            })
            .collect()
    }
}

/// Coarse block-mean projection of an image. Slides sharing a layout land
/// close together, so it is deliberately blind to small on-screen changes.
#[derive(Debug, Clone, Copy)]
pub struct PerceptualProjection {
    pub grid: u32,
}

impl Default for PerceptualProjection {
    fn default() -> Self {
        Self { grid: 4 }
    }
}

impl PerceptualProjection {
    pub fn embed(&self, img: &GrayImage) -> EmbeddingVector {
        let g = self.grid.max(1);
        let (w, h) = (img.width().max(1), img.height().max(1));
        let mut sums = vec![0.0f64; (g * g) as usize];
        let mut counts = vec![0u32; (g * g) as usize];
        for (x, y, p) in img.enumerate_pixels() {
            let bx = (x * g / w).min(g - 1);
            let by = (y * g / h).min(g - 1);
            let idx = (by * g + bx) as usize;
            sums[idx] += f64::from(p.0[0]);
            counts[idx] += 1;
        }
        let values = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { 1.0 } else { s / f64::from(c) + 1.0 })
            .collect();
        EmbeddingVector::normalized(values).expect("block means are offset away from zero")
    }
}

impl FrameEmbedder for PerceptualProjection {
    fn embed_frames(&self, frames: &[&GrayImage]) -> ServiceResult<Vec<EmbeddingVector>> {
        Ok(frames.iter().map(|f| self.embed(f)).collect())
    }
}

/// OCR answers keyed by frame pixel digest.
pub struct MockOcr {
    tables: Arc<FixtureTables>,
}

impl MockOcr {
    pub fn new(tables: Arc<FixtureTables>) -> Self {
        Self { tables }
    }
}

impl OcrEngine for MockOcr {
    fn ocr_frame(&self, image_ref: &Path) -> ServiceResult<OcrResult> {
        let img = load_gray(image_ref).map_err(|e| ServiceError::InvalidArgument(e.to_string()))?;
        let digest = frame_digest(&img);
        let result = self
            .tables
            .ocr
            .get(&digest)
            .cloned()
            .ok_or_else(|| ServiceError::Protocol(format!("no OCR fixture for frame {digest}")))?;
        if !(1..=5).contains(&result.informativeness) {
            return Err(ServiceError::Protocol("informativeness outside 1..=5".into()));
        }
        Ok(result)
    }
}

/// Cache of word buckets, handy for checking that test vocabularies do not collide.
pub fn bucket_map(embedder: &HashedBagOfWords, text: &str) -> HashMap<usize, Vec<String>> {
    let mut out: HashMap<usize, Vec<String>> = HashMap::new();
    for w in words(text) {
        out.entry(embedder.bucket(&w)).or_default().push(w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::cosine;

    fn point() -> KnowledgePoint {
        KnowledgePoint::new(
            "Mathematics",
            "Elementary Mathematics",
            "Rational and Irrational Numbers",
            "the definition of Irrational Numbers",
        )
    }

    #[test]
    fn refine_removes_fillers_and_stutters() {
        let r = MockRefiner.refine_text("um so the the angle is um ninety").unwrap();
        assert_eq!(r, "so the angle is ninety");
    }

    #[test]
    fn refine_is_identity_on_clean_text() {
        let clean = "The sum of the angles of a triangle is 180 degrees.";
        assert_eq!(MockRefiner.refine_text(clean).unwrap(), clean);
    }

    #[test]
    fn refine_rejects_empty_input() {
        assert!(matches!(
            MockRefiner.refine_text("  "),
            Err(ServiceError::InvalidArgument(_))
        ));
    }

    #[test]
    fn judge_uses_fixture_entry() {
        let lecture = "An irrational number cannot be written as a ratio of two integers.";
        let mut tables = FixtureTables::default();
        tables.scores.insert(
            FixtureTables::score_key(lecture),
            ScoreEntry {
                relevance: 5,
                knowledge_density: 4,
                transcription_quality: 5,
                content_flag: None,
            },
        );
        let judge = MockJudge::new("judge-a", Arc::new(tables));
        let s = judge.score_transcript(lecture, &point()).unwrap();
        assert_eq!(
            (s.relevance, s.knowledge_density, s.transcription_quality),
            (5, 4, 5)
        );
        assert_eq!(s.judge_id, "judge-a");
    }

    #[test]
    fn judge_scores_pure_fillers_as_low_density() {
        let judge = MockJudge::new("j", Arc::new(FixtureTables::default()));
        let s = judge.score_transcript("um uh um yeah uh okay um", &point()).unwrap();
        assert_eq!(s.knowledge_density, 1);
    }

    #[test]
    fn judge_is_deterministic() {
        let judge = MockJudge::new("j", Arc::new(FixtureTables::default()));
        let text = "irrational numbers have non repeating decimal expansions";
        assert_eq!(
            judge.score_transcript(text, &point()).unwrap(),
            judge.score_transcript(text, &point()).unwrap()
        );
    }

    #[test]
    fn judge_relevance_tracks_point_terms() {
        let on_topic = heuristic_scores(
            "what are irrational numbers? the definition of rational and irrational numbers",
            &point(),
        );
        let off_topic = heuristic_scores("grandma's lasagna recipe with fresh basil", &point());
        assert_eq!(on_topic.relevance, 5);
        assert_eq!(off_topic.relevance, 1);
    }

    #[test]
    fn judge_flags_blocked_terms() {
        assert_eq!(
            heuristic_scores("download the pirated course torrent", &point()).content_flag,
            Some(ContentFlag::Illegal)
        );
    }

    #[test]
    fn self_similarity_is_one() {
        let e = HashedBagOfWords::default();
        let v = e.embed("the hypotenuse is the longest side");
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabulary_gives_zero_cosine() {
        let e = HashedBagOfWords::default();
        let a = "triangle hypotenuse";
        let b = "bread oven";
        let ba = bucket_map(&e, a);
        let bb = bucket_map(&e, b);
        assert!(ba.keys().all(|k| !bb.contains_key(k)), "test vocabulary collides");
        assert_eq!(cosine(&e.embed(a), &e.embed(b)), 0.0);
    }

    #[test]
    fn batch_embedding_preserves_order_and_norm() {
        let e = HashedBagOfWords::default();
        let texts: Vec<String> = ["alpha beta", "gamma", "alpha beta"].iter().map(|s| s.to_string()).collect();
        let vs = e.embed_texts(&texts).unwrap();
        assert_eq!(vs.len(), 3);
        assert_eq!(vs[0], vs[2]);
        for v in &vs {
            assert!((v.norm() - 1.0).abs() <= 1e-6);
        }
        assert!(e.embed_texts(&["".to_string()]).is_err());
    }

    #[test]
    fn caption_requires_frames() {
        let c = MockCaptioner::new(Arc::new(FixtureTables::default()));
        assert!(matches!(c.caption_clip(&[]), Err(ServiceError::InvalidArgument(_))));
    }

    #[test]
    fn caption_and_ocr_lookups() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(8, 8, |x, _| image::Luma([x as u8 * 30]));
        let path = dir.path().join("f.png");
        crate::media::save_png(&img, &path).unwrap();
        let digest = frame_digest(&img);

        let mut tables = FixtureTables::default();
        tables
            .captions
            .insert(FixtureTables::caption_key(&[digest.clone()]), "a slide".into());
        tables.ocr.insert(
            digest,
            OcrResult {
                text: "x = 1".into(),
                informativeness: 5,
            },
        );
        let tables = Arc::new(tables);
        let cap = MockCaptioner::new(tables.clone()).caption_clip(&[path.clone()]).unwrap();
        assert_eq!(cap, "a slide");
        let ocr = MockOcr::new(tables).ocr_frame(&path).unwrap();
        assert_eq!(ocr.text, "x = 1");

        let other = dir.path().join("g.png");
        crate::media::save_png(&GrayImage::new(8, 8), &other).unwrap();
        let empty = Arc::new(FixtureTables::default());
        assert!(MockOcr::new(empty.clone()).ocr_frame(&other).is_err());
        let fallback = MockCaptioner::new(empty).caption_clip(&[other]).unwrap();
        assert_eq!(fallback.len(), 64);
    }

    #[test]
    fn fixture_tables_round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut tables = FixtureTables::default();
        tables.captions.insert("k".into(), "v".into());
        tables.ppl_reference = Some("a b c".into());
        tables.save(dir.path()).unwrap();
        assert_eq!(FixtureTables::load(dir.path()).unwrap(), tables);
    }
}
