//! Persistent data types of the corpus and the pipeline around it.

mod config;
mod manifest;
mod record;
mod stats;
mod tokenize;
mod types;

pub use config::{KeyframeExtractor, PackingStrategy, PipelineConfig, DEFAULT_EOV_TOKEN};
pub use manifest::{Clock, ManifestEntry, ManifestStore, PipelineManifest};
pub use record::{
    check_sample, deserialize_sample, encode_corpus, read_corpus, sample_text_tokens,
    serialize_sample, validate_corpus, CorpusRules, ValidationReport, Violation,
};
pub use stats::{CorpusStats, Distribution};
pub use tokenize::{count_tokens, Tokenizer, WhitespaceTokenizer};
pub use types::{
    check_segment_order, AsrSegment, ClipStatus, InterleavedElement, InterleavedSample, Keyframe,
    KnowledgePoint, RefinedTranscript, VideoClip, VideoMeta,
};
