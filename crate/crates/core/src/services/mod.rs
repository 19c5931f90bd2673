//! Clients for the external model services, behind one trait per capability.
//!
//! Every service is reachable over the same JSON-over-HTTP protocol
//! ([`HttpServiceClient`]) and has a deterministic in-process mock
//! ([`mock`]) that the offline pipeline and the tests use.

mod http;
pub mod mock;
mod server;
mod unigram;
pub mod wire;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::corpus::{AsrSegment, KnowledgePoint, Tokenizer, WhitespaceTokenizer};

pub use http::{HttpFrameEmbedder, HttpJudge, HttpServiceClient, HttpTokenizer, RetryPolicy};
pub use mock::FixtureTables;
pub use server::{MockServer, MockServerHandle};
pub use unigram::UnigramModel;

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    /// Network-level failure or an overloaded service; safe to retry.
    #[error("transport error: {0}")]
    Transport(String),
    /// The service answered but the answer broke the contract.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl ServiceError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ServiceError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentFlag {
    Inappropriate,
    Illegal,
    Other,
}

impl ContentFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContentFlag::Inappropriate => "inappropriate",
            ContentFlag::Illegal => "illegal",
            ContentFlag::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaScores {
    pub relevance: u8,
    pub knowledge_density: u8,
    pub transcription_quality: u8,
    pub judge_id: String,
    /// Set by a judge reviewing metadata when the content must be excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_flag: Option<ContentFlag>,
}

impl CriteriaScores {
    pub fn check(&self) -> ServiceResult<()> {
        for (name, v) in [
            ("relevance", self.relevance),
            ("knowledge_density", self.knowledge_density),
            ("transcription_quality", self.transcription_quality),
        ] {
            if !(1..=5).contains(&v) {
                return Err(ServiceError::Protocol(format!("{name} score {v} outside 1..=5")));
            }
        }
        Ok(())
    }

    /// All three criteria at or above `threshold`.
    pub fn passes(&self, threshold: u8) -> bool {
        self.relevance >= threshold
            && self.knowledge_density >= threshold
            && self.transcription_quality >= threshold
    }
}

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length; a zero vector is a protocol error.
    pub fn normalized(values: Vec<f64>) -> ServiceResult<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ServiceError::Protocol("embedding has zero or non-finite norm".into()));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / norm).collect();
        Ok(Self {
            dim: values.len(),
            values,
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dim, b.dim);
    a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrResult {
    pub text: String,
    pub informativeness: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub segments: Vec<AsrSegment>,
    pub language: String,
}

impl Transcription {
    pub fn empty() -> Self {
        Self {
            segments: Vec::new(),
            language: "unknown".into(),
        }
    }

    pub fn check(&self) -> ServiceResult<()> {
        crate::corpus::check_segment_order(&self.segments).map_err(ServiceError::Protocol)?;
        if self.language.trim().is_empty() {
            return Err(ServiceError::Protocol("missing language tag".into()));
        }
        Ok(())
    }
}

pub trait SpeechRecognizer: Send + Sync {
    fn transcribe(&self, audio_ref: &Path) -> ServiceResult<Transcription>;
}

pub trait TextRefiner: Send + Sync {
    fn refine_text(&self, text: &str) -> ServiceResult<String>;
}

pub trait TranscriptJudge: Send + Sync {
    fn judge_id(&self) -> &str;
    fn score_transcript(&self, text: &str, point: &KnowledgePoint) -> ServiceResult<CriteriaScores>;
}

pub trait ClipCaptioner: Send + Sync {
    fn caption_clip(&self, frame_refs: &[PathBuf]) -> ServiceResult<String>;
}

pub trait TextEmbedder: Send + Sync {
    fn embed_texts(&self, texts: &[String]) -> ServiceResult<Vec<EmbeddingVector>>;
}

/// Semantic image embeddings.
pub trait FrameEmbedder: Send + Sync {
    fn embed_frames(&self, frames: &[&GrayImage]) -> ServiceResult<Vec<EmbeddingVector>>;
}

pub trait OcrEngine: Send + Sync {
    fn ocr_frame(&self, image_ref: &Path) -> ServiceResult<OcrResult>;
}

pub trait PerplexityScorer: Send + Sync {
    fn perplexity(&self, text: &str) -> ServiceResult<f64>;
}

pub(crate) fn require_text(text: &str, what: &str) -> ServiceResult<()> {
    if text.trim().is_empty() {
        Err(ServiceError::InvalidArgument(format!("{what} requires non-empty text")))
    } else {
        Ok(())
    }
}

/// Every client a pipeline run needs.
#[derive(Clone)]
pub struct ServiceSet {
    pub recognizer: Arc<dyn SpeechRecognizer>,
    pub refiner: Arc<dyn TextRefiner>,
    pub judges: Vec<Arc<dyn TranscriptJudge>>,
    pub captioner: Arc<dyn ClipCaptioner>,
    pub text_embedder: Arc<dyn TextEmbedder>,
    pub frame_embedder: Arc<dyn FrameEmbedder>,
    /// Tried in order until one answers.
    pub ocr: Vec<Arc<dyn OcrEngine>>,
    pub perplexity: Option<Arc<dyn PerplexityScorer>>,
    pub tokenizer: Arc<dyn Tokenizer>,
}

impl ServiceSet {
    pub fn mock(tables: FixtureTables, judge_ids: &[String]) -> Self {
        let tables = Arc::new(tables);
        Self {
            recognizer: Arc::new(mock::MockRecognizer::new(tables.clone())),
            refiner: Arc::new(mock::MockRefiner),
            judges: judge_ids
                .iter()
                .map(|id| Arc::new(mock::MockJudge::new(id.clone(), tables.clone())) as Arc<dyn TranscriptJudge>)
                .collect(),
            captioner: Arc::new(mock::MockCaptioner::new(tables.clone())),
            text_embedder: Arc::new(mock::HashedBagOfWords::default()),
            frame_embedder: Arc::new(mock::PerceptualProjection::default()),
            ocr: vec![Arc::new(mock::MockOcr::new(tables.clone()))],
            perplexity: Some(Arc::new(tables.unigram_model())),
            tokenizer: Arc::new(WhitespaceTokenizer),
        }
    }

    /// Clients for a remote deployment; `spool_dir` receives frames that must
    /// be handed to the image-embedding endpoint by path.
    pub fn http(client: HttpServiceClient, judge_ids: &[String], spool_dir: PathBuf, remote_tokenizer: bool) -> Self {
        let client = Arc::new(client);
        let tokenizer: Arc<dyn Tokenizer> = if remote_tokenizer {
            Arc::new(HttpTokenizer::new(client.clone()))
        } else {
            Arc::new(WhitespaceTokenizer)
        };
        Self {
            recognizer: client.clone(),
            refiner: client.clone(),
            judges: judge_ids
                .iter()
                .map(|id| Arc::new(HttpJudge::new(client.clone(), id.clone())) as Arc<dyn TranscriptJudge>)
                .collect(),
            captioner: client.clone(),
            text_embedder: client.clone(),
            frame_embedder: Arc::new(HttpFrameEmbedder::new(client.clone(), spool_dir)),
            ocr: vec![client.clone()],
            perplexity: Some(client.clone()),
            tokenizer,
        }
    }

    /// First OCR backend that answers; the last error otherwise.
    pub fn ocr_frame(&self, image_ref: &Path) -> ServiceResult<OcrResult> {
        let mut last = ServiceError::Protocol("no OCR backend configured".into());
        for engine in &self.ocr {
            match engine.ocr_frame(image_ref) {
                Ok(r) => return Ok(r),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}
