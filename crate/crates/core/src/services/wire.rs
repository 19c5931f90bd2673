//! JSON bodies of the service endpoints.
//!
//! | endpoint      | request                                   | response                                   |
//! |---------------|-------------------------------------------|--------------------------------------------|
//! | `/transcribe` | `{audio_ref}`                             | `{segments: [{start_s,end_s,text}], language}` |
//! | `/refine`     | `{text}`                                  | `{text}`                                   |
//! | `/score`      | `{text, knowledge_point, judge_id}`       | `{relevance, knowledge_density, transcription_quality, content_flag?}` |
//! | `/caption`    | `{frame_refs}`                            | `{caption}`                                |
//! | `/embed`      | `{texts}` or `{image_refs}`               | `{vectors}`                                |
//! | `/ocr`        | `{image_ref}`                             | `{text, informativeness}`                  |
//! | `/ppl`        | `{text}`                                  | `{perplexity}`                             |
//! | `/tokenize`   | `{text}`                                  | `{n_tokens}`                               |
//!
//! Failures answer with a non-2xx status and `{error}`.

use serde::{Deserialize, Serialize};

use crate::corpus::{AsrSegment, KnowledgePoint};

use super::ContentFlag;

pub const TRANSCRIBE: &str = "/transcribe";
pub const REFINE: &str = "/refine";
pub const SCORE: &str = "/score";
pub const CAPTION: &str = "/caption";
pub const EMBED: &str = "/embed";
pub const OCR: &str = "/ocr";
pub const PPL: &str = "/ppl";
pub const TOKENIZE: &str = "/tokenize";

pub const ENDPOINTS: &[&str] = &[TRANSCRIBE, REFINE, SCORE, CAPTION, EMBED, OCR, PPL];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeRequest {
    pub audio_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeResponse {
    pub segments: Vec<AsrSegment>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub text: String,
    pub knowledge_point: KnowledgePoint,
    pub judge_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub relevance: u8,
    pub knowledge_density: u8,
    pub transcription_quality: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_flag: Option<ContentFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub frame_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbedRequest {
    Texts { texts: Vec<String> },
    Images { image_refs: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrRequest {
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrResponse {
    pub text: String,
    pub informativeness: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityResponse {
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub n_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}
