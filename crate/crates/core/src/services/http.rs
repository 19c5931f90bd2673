//! Blocking JSON-over-HTTP client for the model services.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use image::GrayImage;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{self, *};
use super::{
    require_text, ClipCaptioner, CriteriaScores, EmbeddingVector, FrameEmbedder, OcrEngine, OcrResult,
    PerplexityScorer, ServiceError, ServiceResult, SpeechRecognizer, TextEmbedder, TextRefiner,
    TranscriptJudge, Transcription,
};
use crate::corpus::{KnowledgePoint, Tokenizer};
use crate::media::{frame_digest, save_png};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpServiceClient {
    agent: ureq::Agent,
    base_url: String,
    token: Option<String>,
    retry: RetryPolicy,
    limit: Semaphore,
}

impl std::fmt::Debug for HttpServiceClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpServiceClient")
            .field("base_url", &self.base_url)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

fn status_error(status: u16, body: &[u8]) -> ServiceError {
    let message = serde_json::from_slice::<ErrorResponse>(body)
        .map(|e| e.error)
        .unwrap_or_else(|_| String::from_utf8_lossy(body).chars().take(200).collect());
    match status {
        429 | 502 | 503 | 504 => ServiceError::Transport(format!("status {status}: {message}")),
        400 | 422 => ServiceError::InvalidArgument(message),
        _ => ServiceError::Protocol(format!("status {status}: {message}")),
    }
}

impl HttpServiceClient {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            retry: RetryPolicy::default(),
            limit: Semaphore::new(8),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limit = Semaphore::new(n);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post_once(&self, endpoint: &str, body: &[u8]) -> ServiceResult<Vec<u8>> {
        let _permit = self.limit.acquire();
        let mut req = self
            .agent
            .post(format!("{}{endpoint}", self.base_url))
            .header("content-type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| ServiceError::Transport(format!("{endpoint}: {e}")))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| ServiceError::Transport(format!("{endpoint}: {e}")))?;
        if (200..300).contains(&status) {
            Ok(bytes)
        } else {
            Err(status_error(status, &bytes))
        }
    }

    /// Posts `req` and decodes the answer, retrying transport failures.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, endpoint: &str, req: &Req) -> ServiceResult<Resp> {
        let body = serde_json::to_vec(req).map_err(|e| ServiceError::InvalidArgument(e.to_string()))?;
        let mut attempt = 1;
        loop {
            match self.post_once(endpoint, &body) {
                Ok(bytes) => {
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| ServiceError::Protocol(format!("{endpoint}: malformed response: {e}")));
                }
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    tracing::warn!(endpoint, attempt, error = %e, "retrying service call");
                    std::thread::sleep(self.retry.delay_before(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Sends one empty request per endpoint; any HTTP answer counts as reachable.
    pub fn probe_endpoints(&self) -> Vec<(&'static str, Result<u16, String>)> {
        wire::ENDPOINTS
            .iter()
            .map(|&ep| {
                let mut req = self.agent.post(format!("{}{ep}", self.base_url));
                if let Some(token) = &self.token {
                    req = req.header("authorization", format!("Bearer {token}"));
                }
                let result = req
                    .header("content-type", "application/json")
                    .send(&b"{}"[..])
                    .map(|r| r.status().as_u16())
                    .map_err(|e| e.to_string());
                (ep, result)
            })
            .collect()
    }

    fn embed(&self, req: &EmbedRequest, expected: usize) -> ServiceResult<Vec<EmbeddingVector>> {
        let resp: EmbedResponse = self.post(EMBED, req)?;
        if resp.vectors.len() != expected {
            return Err(ServiceError::Protocol(format!(
                "expected {expected} vectors, got {}",
                resp.vectors.len()
            )));
        }
        let vectors = resp
            .vectors
            .into_iter()
            .map(EmbeddingVector::normalized)
            .collect::<ServiceResult<Vec<_>>>()?;
        if let Some(first) = vectors.first() {
            if vectors.iter().any(|v| v.dim != first.dim) {
                return Err(ServiceError::Protocol("embedding dimensions differ within a batch".into()));
            }
        }
        Ok(vectors)
    }

    pub fn count_tokens_remote(&self, text: &str) -> ServiceResult<usize> {
        let resp: TokenizeResponse = self.post(TOKENIZE, &TextRequest { text: text.into() })?;
        Ok(resp.n_tokens)
    }
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl SpeechRecognizer for HttpServiceClient {
    fn transcribe(&self, audio_ref: &Path) -> ServiceResult<Transcription> {
        let resp: TranscribeResponse = self.post(
            TRANSCRIBE,
            &TranscribeRequest {
                audio_ref: path_string(audio_ref),
            },
        )?;
        let t = Transcription {
            segments: resp.segments,
            language: resp.language,
        };
        t.check()?;
        Ok(t)
    }
}

impl TextRefiner for HttpServiceClient {
    fn refine_text(&self, text: &str) -> ServiceResult<String> {
        require_text(text, "refine")?;
        let resp: TextResponse = self.post(REFINE, &TextRequest { text: text.into() })?;
        if resp.text.trim().is_empty() {
            return Err(ServiceError::Protocol("refiner returned empty text".into()));
        }
        Ok(resp.text)
    }
}

impl ClipCaptioner for HttpServiceClient {
    fn caption_clip(&self, frame_refs: &[PathBuf]) -> ServiceResult<String> {
        if frame_refs.is_empty() {
            return Err(ServiceError::InvalidArgument("caption requires at least one frame".into()));
        }
        let resp: CaptionResponse = self.post(
            CAPTION,
            &CaptionRequest {
                frame_refs: frame_refs.iter().map(|p| path_string(p)).collect(),
            },
        )?;
        Ok(resp.caption)
    }
}

impl TextEmbedder for HttpServiceClient {
    fn embed_texts(&self, texts: &[String]) -> ServiceResult<Vec<EmbeddingVector>> {
        for t in texts {
            require_text(t, "embed")?;
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.embed(&EmbedRequest::Texts { texts: texts.to_vec() }, texts.len())
    }
}

impl OcrEngine for HttpServiceClient {
    fn ocr_frame(&self, image_ref: &Path) -> ServiceResult<OcrResult> {
        let resp: OcrResponse = self.post(
            OCR,
            &OcrRequest {
                image_ref: path_string(image_ref),
            },
        )?;
        if !(1..=5).contains(&resp.informativeness) {
            return Err(ServiceError::Protocol(format!(
                "informativeness {} outside 1..=5",
                resp.informativeness
            )));
        }
        Ok(OcrResult {
            text: resp.text,
            informativeness: resp.informativeness,
        })
    }
}

impl PerplexityScorer for HttpServiceClient {
    fn perplexity(&self, text: &str) -> ServiceResult<f64> {
        require_text(text, "perplexity")?;
        let resp: PerplexityResponse = self.post(PPL, &TextRequest { text: text.into() })?;
        if !(resp.perplexity.is_finite() && resp.perplexity > 0.0) {
            return Err(ServiceError::Protocol(format!("perplexity {} is not positive", resp.perplexity)));
        }
        Ok(resp.perplexity)
    }
}

/// One judge model behind the shared `/score` endpoint.
pub struct HttpJudge {
    client: Arc<HttpServiceClient>,
    judge_id: String,
}

impl HttpJudge {
    pub fn new(client: Arc<HttpServiceClient>, judge_id: impl Into<String>) -> Self {
        Self {
            client,
            judge_id: judge_id.into(),
        }
    }
}

impl TranscriptJudge for HttpJudge {
    fn judge_id(&self) -> &str {
        &self.judge_id
    }

    fn score_transcript(&self, text: &str, point: &KnowledgePoint) -> ServiceResult<CriteriaScores> {
        require_text(text, "score")?;
        let resp: ScoreResponse = self.client.post(
            SCORE,
            &ScoreRequest {
                text: text.into(),
                knowledge_point: point.clone(),
                judge_id: self.judge_id.clone(),
            },
        )?;
        let scores = CriteriaScores {
            relevance: resp.relevance,
            knowledge_density: resp.knowledge_density,
            transcription_quality: resp.transcription_quality,
            judge_id: self.judge_id.clone(),
            content_flag: resp.content_flag,
        };
        scores.check()?;
        Ok(scores)
    }
}

/// Writes frames to a spool directory and embeds them by reference.
pub struct HttpFrameEmbedder {
    client: Arc<HttpServiceClient>,
    spool_dir: PathBuf,
}

impl HttpFrameEmbedder {
    pub fn new(client: Arc<HttpServiceClient>, spool_dir: PathBuf) -> Self {
        Self { client, spool_dir }
    }
}

impl FrameEmbedder for HttpFrameEmbedder {
    fn embed_frames(&self, frames: &[&GrayImage]) -> ServiceResult<Vec<EmbeddingVector>> {
        if frames.is_empty() {
            return Ok(Vec::new());
        }
        let mut refs = Vec::with_capacity(frames.len());
        for frame in frames {
            let path = self.spool_dir.join(format!("{}.png", frame_digest(frame)));
            if !path.exists() {
                save_png(frame, &path).map_err(|e| ServiceError::InvalidArgument(e.to_string()))?;
            }
            refs.push(path_string(&path));
        }
        self.client.embed(&EmbedRequest::Images { image_refs: refs }, frames.len())
    }
}

/// Token counts from the service's `/tokenize` endpoint.
pub struct HttpTokenizer {
    client: Arc<HttpServiceClient>,
}

impl HttpTokenizer {
    pub fn new(client: Arc<HttpServiceClient>) -> Self {
        Self { client }
    }
}

impl Tokenizer for HttpTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        if text.is_empty() {
            return 0;
        }
        self.client.count_tokens_remote(text).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "remote tokenizer failed, counting whitespace tokens");
            text.split_whitespace().count()
        })
    }
}
