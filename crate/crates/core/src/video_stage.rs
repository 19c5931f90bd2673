//! Video-level audio extraction, rule and judge filters, transcript refinement.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{AsrSegment, KnowledgePoint, PipelineConfig, RefinedTranscript, Tokenizer, VideoMeta};
use crate::error::{Error, Result};
use crate::media::{wav_duration_s, MediaError, MediaToolkit};
use crate::services::{CriteriaScores, PerplexityScorer, TextRefiner, TranscriptJudge, Transcription};

/// Allowed gap between video and extracted audio durations.
pub const AUDIO_DURATION_TOLERANCE_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioOutcome {
    Extracted,
    /// The video has no audio track; it goes on with an empty transcript.
    Silent,
}

/// Writes the video's audio as 16 kHz mono PCM to `out` and checks its length.
pub fn extract_audio(toolkit: &dyn MediaToolkit, video: &Path, out: &Path) -> Result<AudioOutcome> {
    match toolkit.extract_audio(video, out) {
        Ok(()) => {}
        Err(MediaError::NoAudioTrack(_)) => return Ok(AudioOutcome::Silent),
        Err(e) => return Err(e.into()),
    }
    let info = toolkit.probe(video)?;
    let audio = wav_duration_s(out)?;
    if (audio - info.duration_s).abs() > AUDIO_DURATION_TOLERANCE_S {
        return Err(Error::Validation(format!(
            "audio of {} lasts {audio:.2}s but the video lasts {:.2}s",
            video.display(),
            info.duration_s
        )));
    }
    Ok(AudioOutcome::Extracted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFailure {
    NonEnglish,
    TooShort,
    TooFewTokens,
}

impl RuleFailure {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleFailure::NonEnglish => "non_english",
            RuleFailure::TooShort => "too_short",
            RuleFailure::TooFewTokens => "too_few_tokens",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "reason", rename_all = "snake_case")]
pub enum RuleResult {
    Pass,
    Fail(RuleFailure),
}

pub fn transcript_text(segments: &[AsrSegment]) -> String {
    segments
        .iter()
        .map(|s| s.text.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Duration, then token count, then language: a silent video has no
/// language tag to speak of and is reported as having too few tokens.
pub fn rule_filter(
    meta: &VideoMeta,
    transcript: &Transcription,
    config: &PipelineConfig,
    tokenizer: &dyn Tokenizer,
) -> RuleResult {
    if meta.duration_s < config.min_duration_s {
        return RuleResult::Fail(RuleFailure::TooShort);
    }
    if tokenizer.count_tokens(&transcript_text(&transcript.segments)) < config.min_asr_tokens {
        return RuleResult::Fail(RuleFailure::TooFewTokens);
    }
    if !config.is_accepted_language(&transcript.language) {
        return RuleResult::Fail(RuleFailure::NonEnglish);
    }
    RuleResult::Pass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResult {
    pub judge_id: String,
    pub pass: bool,
    pub scores: CriteriaScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum FinalVerdict {
    Kept,
    Dropped(String),
    Pending(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    pub video_id: String,
    pub rule_result: RuleResult,
    pub judge_results: Vec<JudgeResult>,
    /// Judges that could not be reached and were left out of the decision.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_judges: Vec<String>,
    pub final_verdict: FinalVerdict,
}

/// A video is dropped when the rule filter fails or when every judge that
/// answered fails it.
pub fn is_dropped(rule_passed: bool, judge_passes: &[bool]) -> bool {
    !rule_passed || (!judge_passes.is_empty() && judge_passes.iter().all(|p| !p))
}

pub fn judge_filter(
    video_id: &str,
    text: &str,
    point: &KnowledgePoint,
    judges: &[Arc<dyn TranscriptJudge>],
    threshold: u8,
) -> VideoVerdict {
    let mut judge_results = Vec::new();
    let mut skipped_judges = Vec::new();
    let mut last_error = String::from("no judge configured");
    for judge in judges {
        match judge.score_transcript(text, point) {
            Ok(scores) => judge_results.push(JudgeResult {
                judge_id: judge.judge_id().to_string(),
                pass: scores.passes(threshold),
                scores,
            }),
            Err(e) => {
                tracing::warn!(video_id, judge = judge.judge_id(), error = %e, "judge skipped");
                last_error = format!("{}: {e}", judge.judge_id());
                skipped_judges.push(judge.judge_id().to_string());
            }
        }
    }
    let passes: Vec<bool> = judge_results.iter().map(|r| r.pass).collect();
    let final_verdict = if judge_results.is_empty() {
        FinalVerdict::Pending(last_error)
    } else if is_dropped(true, &passes) {
        FinalVerdict::Dropped("judges".into())
    } else {
        FinalVerdict::Kept
    };
    VideoVerdict {
        video_id: video_id.to_string(),
        rule_result: RuleResult::Pass,
        judge_results,
        skipped_judges,
        final_verdict,
    }
}

pub fn rule_verdict(video_id: &str, failure: RuleFailure) -> VideoVerdict {
    VideoVerdict {
        video_id: video_id.to_string(),
        rule_result: RuleResult::Fail(failure),
        judge_results: Vec::new(),
        skipped_judges: Vec::new(),
        final_verdict: FinalVerdict::Dropped(failure.as_str().to_string()),
    }
}

/// Rewrites each segment on its own; spans are copied unchanged and a failed
/// rewrite keeps the raw text.
pub fn refine_transcript(
    video_id: &str,
    transcript: &Transcription,
    refiner: &dyn TextRefiner,
    perplexity: Option<&dyn PerplexityScorer>,
) -> RefinedTranscript {
    let mut refined = Vec::with_capacity(transcript.segments.len());
    let mut unrefined = Vec::new();
    for (idx, seg) in transcript.segments.iter().enumerate() {
        let mut out = seg.clone();
        if !seg.text.trim().is_empty() {
            match refiner.refine_text(&seg.text) {
                Ok(text) => out.text = text,
                Err(e) => {
                    tracing::warn!(video_id, segment = idx, error = %e, "refinement failed, keeping raw text");
                    unrefined.push(idx);
                }
            }
        }
        refined.push(out);
    }
    let ppl = |segments: &[AsrSegment]| {
        let text = transcript_text(segments);
        perplexity.filter(|_| !text.is_empty()).and_then(|p| p.perplexity(&text).ok())
    };
    RefinedTranscript {
        video_id: video_id.to_string(),
        language: transcript.language.clone(),
        ppl_raw: ppl(&transcript.segments),
        ppl_refined: ppl(&refined),
        raw_segments: transcript.segments.clone(),
        refined_paragraphs: refined,
        unrefined,
    }
}
