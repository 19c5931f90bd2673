//! ASR paragraph merging, clip cutting and the caption-versus-transcript filter.

use std::path::PathBuf;

use crate::corpus::{check_segment_order, AsrSegment, ClipStatus, PipelineConfig, VideoClip};
use crate::error::{Error, Result};
use crate::services::{cosine, ClipCaptioner, TextEmbedder};

/// Slack allowed when checking clip spans against the video duration.
pub const SPAN_TOLERANCE_S: f64 = 0.5;

fn join_text(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a} {b}"),
    }
}

fn absorb(paragraph: &mut AsrSegment, seg: &AsrSegment) {
    paragraph.end_s = seg.end_s;
    paragraph.text = join_text(&paragraph.text, seg.text.trim());
    paragraph.silent = paragraph.silent && seg.silent;
}

/// Greedy merge: a paragraph closes once it lasts `clip_target_s`, or before
/// a segment that would stretch it past `clip_max_s`. Paragraphs shorter
/// than `clip_min_s` then fold into their predecessor if the result stays
/// within `clip_max_s`.
pub fn merge_segments(segments: &[AsrSegment], config: &PipelineConfig) -> Result<Vec<AsrSegment>> {
    check_segment_order(segments).map_err(Error::Validation)?;
    let mut paragraphs: Vec<AsrSegment> = Vec::new();
    let mut current: Option<AsrSegment> = None;
    for seg in segments {
        current = match current.take() {
            Some(mut p) if seg.end_s - p.start_s <= config.clip_max_s => {
                absorb(&mut p, seg);
                Some(p)
            }
            Some(p) => {
                paragraphs.push(p);
                Some(fresh(seg))
            }
            None => Some(fresh(seg)),
        };
        if let Some(p) = &current {
            if p.duration_s() >= config.clip_target_s {
                paragraphs.push(current.take().expect("checked above"));
            }
        }
    }
    paragraphs.extend(current);

    let mut merged: Vec<AsrSegment> = Vec::with_capacity(paragraphs.len());
    for p in paragraphs {
        match merged.last_mut() {
            Some(prev) if p.duration_s() < config.clip_min_s && p.end_s - prev.start_s <= config.clip_max_s => {
                absorb(prev, &p);
            }
            _ => merged.push(p),
        }
    }
    Ok(merged)
}

fn fresh(seg: &AsrSegment) -> AsrSegment {
    let mut p = seg.clone();
    p.text = p.text.trim().to_string();
    p
}

pub fn clip_id(video_id: &str, index: usize) -> String {
    format!("{video_id}_{index:03}")
}

/// One clip per paragraph, in order.
pub fn cut_clips(video_id: &str, paragraphs: &[AsrSegment], video_duration_s: f64) -> Result<Vec<VideoClip>> {
    paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.end_s > video_duration_s + SPAN_TOLERANCE_S {
                return Err(Error::Validation(format!(
                    "paragraph {i} of {video_id} ends at {:.2}s, after the video ({video_duration_s:.2}s)",
                    p.end_s
                )));
            }
            Ok(VideoClip {
                clip_id: clip_id(video_id, i),
                video_id: video_id.to_string(),
                start_s: p.start_s,
                end_s: p.end_s.min(video_duration_s.max(p.start_s)),
                asr_text: p.text.clone(),
                caption: None,
                caption_asr_similarity: None,
                status: ClipStatus::Pending,
            })
        })
        .collect()
}

/// Up to `max_frames` timestamps at the centres of equal slices of the clip.
pub fn caption_frame_times(start_s: f64, end_s: f64, max_frames: usize) -> Vec<f64> {
    let n = max_frames.max(1);
    let step = (end_s - start_s) / n as f64;
    (0..n).map(|i| start_s + (i as f64 + 0.5) * step).collect()
}

/// Captions the clip from `frames` and keeps it when the caption's embedding
/// is close enough to the transcript's. Service failures leave it pending.
pub fn visual_filter(
    mut clip: VideoClip,
    frames: &[PathBuf],
    captioner: &dyn ClipCaptioner,
    embedder: &dyn TextEmbedder,
    threshold: f64,
) -> VideoClip {
    let caption = match captioner.caption_clip(frames) {
        Ok(c) if !c.trim().is_empty() => c,
        Ok(_) => {
            tracing::warn!(clip_id = %clip.clip_id, "empty caption");
            clip.status = ClipStatus::Pending;
            return clip;
        }
        Err(e) => {
            tracing::warn!(clip_id = %clip.clip_id, error = %e, "captioning failed");
            clip.status = ClipStatus::Pending;
            return clip;
        }
    };
    clip.caption = Some(caption.clone());
    if clip.asr_text.trim().is_empty() {
        clip.caption_asr_similarity = Some(0.0);
        clip.status = ClipStatus::DroppedVisual;
        return clip;
    }
    match embedder.embed_texts(&[caption, clip.asr_text.clone()]) {
        Ok(v) => {
            let sim = cosine(&v[0], &v[1]).clamp(-1.0, 1.0);
            clip.caption_asr_similarity = Some(sim);
            clip.status = if sim >= threshold {
                ClipStatus::Kept
            } else {
                ClipStatus::DroppedVisual
            };
        }
        Err(e) => {
            tracing::warn!(clip_id = %clip.clip_id, error = %e, "embedding failed");
            clip.status = ClipStatus::Pending;
        }
    }
    clip
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::mock::HashedBagOfWords;
    use crate::services::{ServiceError, ServiceResult};
    use proptest::prelude::*;

    fn segs(spans: &[(f64, f64)]) -> Vec<AsrSegment> {
        spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| AsrSegment::new(s, e, format!("w{i}")))
            .collect()
    }

    fn spans(p: &[AsrSegment]) -> Vec<(f64, f64)> {
        p.iter().map(|s| (s.start_s, s.end_s)).collect()
    }

    #[test]
    fn closes_at_target() {
        let c = PipelineConfig::default();
        let p = merge_segments(&segs(&[(0.0, 4.0), (4.0, 9.0), (9.0, 15.0)]), &c).unwrap();
        assert_eq!(spans(&p), [(0.0, 15.0)]);
        assert_eq!(p[0].text, "w0 w1 w2");
    }

    #[test]
    fn short_remainder_merges_backward() {
        let c = PipelineConfig::default();
        let p = merge_segments(&segs(&[(0.0, 18.0), (18.0, 19.0)]), &c).unwrap();
        assert_eq!(spans(&p), [(0.0, 19.0)]);
    }

    #[test]
    fn oversized_segment_stands_alone() {
        let c = PipelineConfig::default();
        let p = merge_segments(&segs(&[(0.0, 25.0)]), &c).unwrap();
        assert_eq!(spans(&p), [(0.0, 25.0)]);
    }

    #[test]
    fn overlap_is_rejected() {
        let c = PipelineConfig::default();
        assert!(matches!(
            merge_segments(&segs(&[(0.0, 5.0), (4.0, 8.0)]), &c),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn clips_follow_paragraphs() {
        let p = segs(&[(0.0, 15.0), (15.0, 30.0), (30.0, 42.0)]);
        let clips = cut_clips("v", &p, 42.0).unwrap();
        assert_eq!(clips.len(), 3);
        assert_eq!(clips[1].clip_id, "v_001");
        assert_eq!((clips[2].start_s, clips[2].end_s), (30.0, 42.0));
        assert!(cut_clips("v", &p, 30.0).is_err());
    }

    struct Echo(String);

    impl ClipCaptioner for Echo {
        fn caption_clip(&self, _: &[PathBuf]) -> ServiceResult<String> {
            if self.0.is_empty() {
                Err(ServiceError::Transport("down".into()))
            } else {
                Ok(self.0.clone())
            }
        }
    }

    fn clip(text: &str) -> VideoClip {
        cut_clips("v", &[AsrSegment::new(0.0, 12.0, text)], 12.0).unwrap().remove(0)
    }

    #[test]
    fn visual_filter_outcomes() {
        let e = HashedBagOfWords::default();
        let text = "the hypotenuse is opposite the right angle";
        let same = visual_filter(clip(text), &[], &Echo(text.into()), &e, 0.35);
        assert_eq!(same.status, ClipStatus::Kept);
        assert!((same.caption_asr_similarity.unwrap() - 1.0).abs() < 1e-9);

        let other = visual_filter(clip("triangle hypotenuse"), &[], &Echo("bread oven".into()), &e, 0.35);
        assert_eq!(other.status, ClipStatus::DroppedVisual);
        assert_eq!(other.caption_asr_similarity, Some(0.0));
        assert_eq!(other.asr_text, "triangle hypotenuse");

        let pending = visual_filter(clip(text), &[], &Echo(String::new()), &e, 0.35);
        assert_eq!(pending.status, ClipStatus::Pending);
    }

    #[test]
    fn caption_frames_are_inside_the_clip() {
        let t = caption_frame_times(10.0, 26.0, 8);
        assert_eq!(t.len(), 8);
        assert_eq!(t[0], 11.0);
        assert!(t.iter().all(|&x| (10.0..26.0).contains(&x)));
    }

    proptest! {
        #[test]
        fn merge_partitions_and_conserves_text(durations in proptest::collection::vec(0.5f64..12.0, 0..30)) {
            let mut t = 0.0;
            let mut input = Vec::new();
            for (i, d) in durations.iter().enumerate() {
                input.push(AsrSegment::new(t, t + d, format!("w{i}")));
                t += d;
            }
            let c = PipelineConfig::default();
            let p = merge_segments(&input, &c).unwrap();
            let joined_in: Vec<_> = input.iter().map(|s| s.text.clone()).collect();
            let joined_out: Vec<_> = p.iter().map(|s| s.text.clone()).collect();
            prop_assert_eq!(joined_in.join(" "), joined_out.join(" "));
            prop_assert!(p.windows(2).all(|w| w[0].end_s == w[1].start_s));
            if let (Some(first), Some(last)) = (p.first(), p.last()) {
                prop_assert_eq!(first.start_s, 0.0);
                prop_assert_eq!(last.end_s, t);
            }
            for para in &p {
                prop_assert!(para.duration_s() <= c.clip_max_s + 1e-9);
            }
            prop_assert_eq!(merge_segments(&input, &c).unwrap(), p);
        }
    }
}
