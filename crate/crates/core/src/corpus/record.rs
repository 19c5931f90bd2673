//! Line-delimited corpus records and their validation.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::Tokenizer;
use super::types::{InterleavedElement, InterleavedSample};
use crate::error::{Error, Result};

/// What a record must satisfy beyond parsing.
pub struct CorpusRules<'a> {
    pub eov_token: &'a str,
    pub tokenizer: &'a dyn Tokenizer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based line number, when read from a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub invariant: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    pub n_violations: usize,
    pub violations: Vec<Violation>,
}

/// Text tokens charged to a sample: every text element, with each
/// end-of-video marker counting as one token.
pub fn sample_text_tokens(elements: &[InterleavedElement], tokenizer: &dyn Tokenizer) -> usize {
    elements
        .iter()
        .map(|e| match e {
            InterleavedElement::Image { .. } => 0,
            InterleavedElement::EndOfVideo { .. } => 1,
            InterleavedElement::AsrText { text } | InterleavedElement::OcrText { text } => {
                tokenizer.count_tokens(text)
            }
        })
        .sum()
}

/// Returns `(invariant, message)` pairs for every broken invariant.
pub fn check_sample(sample: &InterleavedSample, rules: &CorpusRules<'_>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut fail = |inv: &str, msg: String| out.push((inv.to_string(), msg));

    if sample.sample_id.trim().is_empty() {
        fail("sample_id", "sample_id is empty".into());
    }
    let n_images = sample.images().count();
    if sample.n_images != n_images {
        fail(
            "n_images",
            format!("n_images is {} but {} image elements present", sample.n_images, n_images),
        );
    }
    if n_images == 0 {
        fail("min_images", "sample has no image elements".into());
    }
    let tokens = sample_text_tokens(&sample.elements, rules.tokenizer);
    if sample.n_text_tokens != tokens {
        fail(
            "n_text_tokens",
            format!(
                "n_text_tokens is {} but text elements count {}",
                sample.n_text_tokens, tokens
            ),
        );
    }
    for (idx, element) in sample.elements.iter().enumerate() {
        match element {
            InterleavedElement::Image { image_ref, timestamp_s } => {
                if image_ref.trim().is_empty() {
                    fail("image_ref", format!("element {idx} has an empty image_ref"));
                }
                if let Some(ts) = timestamp_s {
                    if !ts.is_finite() || *ts < 0.0 {
                        fail("timestamp", format!("element {idx} has timestamp {ts}"));
                    }
                }
            }
            InterleavedElement::EndOfVideo { text } => {
                if text != rules.eov_token {
                    fail(
                        "eov_token",
                        format!(
                            "element {idx} end-of-video payload {text:?} differs from configured {:?}",
                            rules.eov_token
                        ),
                    );
                }
            }
            InterleavedElement::AsrText { text } | InterleavedElement::OcrText { text } => {
                if text.trim().is_empty() {
                    fail("text", format!("element {idx} has empty text"));
                }
            }
        }
    }

    let segments = sample.video_segments();
    if sample.source_video_ids.is_empty() {
        fail("source_video_ids", "source_video_ids is empty".into());
    } else if segments.len() != sample.source_video_ids.len() {
        fail(
            "source_video_ids",
            format!(
                "{} video segment(s) but {} source video id(s)",
                segments.len(),
                sample.source_video_ids.len()
            ),
        );
    }
    for (seg_idx, segment) in segments.iter().enumerate() {
        let mut last: Option<f64> = None;
        for element in segment.iter() {
            if let InterleavedElement::Image {
                timestamp_s: Some(ts),
                ..
            } = element
            {
                if let Some(prev) = last {
                    if *ts < prev {
                        let video = sample
                            .source_video_ids
                            .get(seg_idx)
                            .map(String::as_str)
                            .unwrap_or("?");
                        fail(
                            "chronology",
                            format!(
                                "image timestamps of video {video} go backwards ({prev} then {ts}); clips overlap"
                            ),
                        );
                        break;
                    }
                }
                last = Some(*ts);
            }
        }
    }
    out
}

pub fn serialize_sample(sample: &InterleavedSample, rules: &CorpusRules<'_>) -> Result<String> {
    let problems = check_sample(sample, rules);
    if let Some((inv, msg)) = problems.into_iter().next() {
        return Err(Error::Validation(format!(
            "sample {} violates `{inv}`: {msg}",
            sample.sample_id
        )));
    }
    serde_json::to_string(sample).map_err(|e| Error::json(sample.sample_id.clone(), e))
}

pub fn deserialize_sample(line: &str) -> Result<InterleavedSample> {
    serde_json::from_str(line).map_err(|e| Error::json("corpus record", e))
}

/// Reads every record of a corpus file and checks it.
pub fn validate_corpus(path: &Path, rules: &CorpusRules<'_>) -> Result<ValidationReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = ValidationReport {
        n_samples: 0,
        n_violations: 0,
        violations: Vec::new(),
    };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.n_samples += 1;
        match deserialize_sample(&line) {
            Ok(sample) => {
                for (invariant, message) in check_sample(&sample, rules) {
                    report.violations.push(Violation {
                        line: Some(idx + 1),
                        sample_id: Some(sample.sample_id.clone()),
                        invariant,
                        message,
                    });
                }
            }
            Err(e) => report.violations.push(Violation {
                line: Some(idx + 1),
                sample_id: None,
                invariant: "parse".into(),
                message: e.to_string(),
            }),
        }
    }
    report.n_violations = report.violations.len();
    Ok(report)
}

/// Reads a corpus file, failing on the first unparsable record.
pub fn read_corpus(path: &Path) -> Result<Vec<InterleavedSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), idx + 1), e))?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Serializes samples into the line-delimited corpus format.
pub fn encode_corpus(samples: &[InterleavedSample], rules: &CorpusRules<'_>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for sample in samples {
        out.extend_from_slice(serialize_sample(sample, rules)?.as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}
