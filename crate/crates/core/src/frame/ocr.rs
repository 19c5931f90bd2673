//! Keyframe scoring through OCR and removal of repeated on-screen text.

use std::collections::BTreeSet;
use std::path::Path;

use crate::corpus::Keyframe;
use crate::services::{OcrResult, ServiceResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OcrOutcome {
    pub kept: Vec<Keyframe>,
    /// `(frame_id, score)` of frames scored below the threshold.
    pub dropped: Vec<(String, u8)>,
    /// Frames kept without OCR because the service failed.
    pub flagged: Vec<String>,
}

/// Scores every keyframe with `ocr`; frames scoring below `threshold` are
/// dropped, a failed call keeps the frame without text and flags it.
pub fn ocr_and_filter(
    keyframes: Vec<Keyframe>,
    resolve: impl Fn(&str) -> std::path::PathBuf,
    ocr: impl Fn(&Path) -> ServiceResult<OcrResult>,
    threshold: u8,
) -> OcrOutcome {
    let mut out = OcrOutcome::default();
    for mut kf in keyframes {
        match ocr(&resolve(&kf.image_ref)) {
            Ok(result) if result.informativeness < threshold => {
                out.dropped.push((kf.frame_id, result.informativeness));
            }
            Ok(result) => {
                kf.score = Some(result.informativeness);
                let text = result.text.trim();
                kf.ocr_text = (!text.is_empty()).then(|| text.to_string());
                out.kept.push(kf);
            }
            Err(e) => {
                tracing::warn!(frame_id = %kf.frame_id, error = %e, "ocr failed, keeping frame without text");
                kf.score = None;
                kf.ocr_text = None;
                out.flagged.push(kf.frame_id.clone());
                out.kept.push(kf);
            }
        }
    }
    out
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Marks OCR text as kept unless it is at least `threshold` Jaccard-similar
/// to OCR text kept earlier in the same sequence. Frames are never removed.
pub fn dedup_ocr(keyframes: &mut [Keyframe], threshold: f64) {
    let mut kept: Vec<BTreeSet<String>> = Vec::new();
    for kf in keyframes {
        let tokens = kf.ocr_text.as_deref().map(token_set).unwrap_or_default();
        if tokens.is_empty() {
            kf.ocr_kept = false;
            continue;
        }
        kf.ocr_kept = !kept.iter().any(|prev| jaccard(prev, &tokens) >= threshold);
        if kf.ocr_kept {
            kept.push(tokens);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::ServiceError;

    fn kf(id: &str, ocr: Option<&str>) -> Keyframe {
        Keyframe {
            frame_id: id.into(),
            clip_id: "c".into(),
            timestamp_s: 0.0,
            image_ref: format!("{id}.png"),
            score: None,
            ocr_text: ocr.map(Into::into),
            ocr_kept: false,
        }
    }

    fn kept_flags(frames: &[Keyframe]) -> Vec<bool> {
        frames.iter().map(|k| k.ocr_kept).collect()
    }

    #[test]
    fn identical_text_is_deduplicated() {
        let mut frames = vec![kf("a", Some("a^2 + b^2 = c^2")), kf("b", Some("a^2 + b^2 = c^2"))];
        dedup_ocr(&mut frames, 0.8);
        assert_eq!(kept_flags(&frames), [true, false]);
    }

    #[test]
    fn disjoint_and_half_overlapping_text_is_kept() {
        let mut frames = vec![kf("a", Some("sine cosine")), kf("b", Some("integral derivative"))];
        dedup_ocr(&mut frames, 0.8);
        assert_eq!(kept_flags(&frames), [true, true]);

        // {x, y, z} vs {x, y, w}: 2 shared of 4 -> 0.5
        let mut frames = vec![kf("a", Some("x y z")), kf("b", Some("x y w"))];
        assert_eq!(jaccard(&token_set("x y z"), &token_set("x y w")), 0.5);
        dedup_ocr(&mut frames, 0.8);
        assert_eq!(kept_flags(&frames), [true, true]);
    }

    #[test]
    fn dedup_is_idempotent() {
        let mut frames = vec![
            kf("a", Some("one two three")),
            kf("b", None),
            kf("c", Some("one two three four")),
            kf("d", Some("one two three")),
        ];
        dedup_ocr(&mut frames, 0.7);
        let first = frames.clone();
        dedup_ocr(&mut frames, 0.7);
        assert_eq!(frames, first);
        assert_eq!(kept_flags(&frames), [true, false, false, false]);
    }

    #[test]
    fn scores_filter_and_failures_flag() {
        let frames = vec![kf("occluded", None), kf("slide", None)];
        let out = ocr_and_filter(
            frames,
            |r: &str| std::path::PathBuf::from(r),
            |p: &Path| {
                Ok(if p.to_string_lossy().starts_with("occluded") {
                    OcrResult { text: String::new(), informativeness: 1 }
                } else {
                    OcrResult { text: "Pythagorean theorem".into(), informativeness: 5 }
                })
            },
            3,
        );
        assert_eq!(out.dropped, vec![("occluded".to_string(), 1)]);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].ocr_text.as_deref(), Some("Pythagorean theorem"));
        assert_eq!(out.kept[0].score, Some(5));

        let out = ocr_and_filter(
            vec![kf("a", None), kf("b", None)],
            |r: &str| std::path::PathBuf::from(r),
            |_: &Path| Err(ServiceError::Transport("down".into())),
            3,
        );
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.flagged, ["a", "b"]);
    }
}
