use serde::{Deserialize, Serialize};

/// Leaf of the four-layer taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgePoint {
    pub subject: String,
    pub course: String,
    pub sub_course: String,
    pub point: String,
}

impl KnowledgePoint {
    pub fn new(
        subject: impl Into<String>,
        course: impl Into<String>,
        sub_course: impl Into<String>,
        point: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            course: course.into(),
            sub_course: sub_course.into(),
            point: point.into(),
        }
    }

    /// Stable key `subject/course/sub_course/point`. Slashes and percent signs
    /// inside a layer name are percent-escaped so the key stays unambiguous.
    pub fn id(&self) -> String {
        [&self.subject, &self.course, &self.sub_course, &self.point]
            .iter()
            .map(|layer| escape_layer(layer))
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn layers(&self) -> [&str; 4] {
        [&self.subject, &self.course, &self.sub_course, &self.point]
    }
}

fn escape_layer(layer: &str) -> String {
    layer.replace('%', "%25").replace('/', "%2F")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub comments: Vec<String>,
    pub duration_s: f64,
    #[serde(default = "unknown_language")]
    pub language: String,
    /// Id of the knowledge point whose query retrieved the video.
    #[serde(default)]
    pub source_point: String,
}

fn unknown_language() -> String {
    "unknown".to_string()
}

impl VideoMeta {
    pub fn check(&self) -> Result<(), String> {
        if self.video_id.trim().is_empty() {
            return Err("video_id is empty".into());
        }
        if !(self.duration_s >= 0.0) {
            return Err(format!("video {} has negative duration", self.video_id));
        }
        Ok(())
    }

    /// Title, description and comments as one block of text for review.
    pub fn review_text(&self) -> String {
        let mut text = format!("Title: {}\nDescription: {}", self.title, self.description);
        for comment in &self.comments {
            text.push_str("\nComment: ");
            text.push_str(comment);
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub silent: bool,
}

impl AsrSegment {
    pub fn new(start_s: f64, end_s: f64, text: impl Into<String>) -> Self {
        Self {
            start_s,
            end_s,
            text: text.into(),
            silent: false,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.start_s >= 0.0 && self.start_s < self.end_s) {
            return Err(format!(
                "segment span [{}, {}) is not a positive interval",
                self.start_s, self.end_s
            ));
        }
        if self.text.trim().is_empty() && !self.silent {
            return Err(format!(
                "segment [{}, {}) has empty text but is not flagged silent",
                self.start_s, self.end_s
            ));
        }
        Ok(())
    }
}

/// Checks that segments are individually valid, time-ordered and non-overlapping.
pub fn check_segment_order(segments: &[AsrSegment]) -> Result<(), String> {
    for seg in segments {
        seg.check()?;
    }
    for pair in segments.windows(2) {
        if pair[1].start_s < pair[0].end_s {
            return Err(format!(
                "segments [{}, {}) and [{}, {}) overlap or are out of order",
                pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
            ));
        }
    }
    Ok(())
}

/// Raw ASR plus its rewritten form. `refined_paragraphs` pairs 1:1 with
/// `raw_segments` and keeps their spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedTranscript {
    pub video_id: String,
    pub language: String,
    pub raw_segments: Vec<AsrSegment>,
    pub refined_paragraphs: Vec<AsrSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl_refined: Option<f64>,
    /// Indices of paragraphs whose rewrite failed and kept their raw text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unrefined: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStatus {
    Kept,
    DroppedVisual,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClip {
    pub clip_id: String,
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub asr_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_asr_similarity: Option<f64>,
    pub status: ClipStatus,
}

impl VideoClip {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame_id: String,
    pub clip_id: String,
    pub timestamp_s: f64,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    #[serde(default)]
    pub ocr_kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterleavedElement {
    Image {
        image_ref: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timestamp_s: Option<f64>,
    },
    AsrText {
        text: String,
    },
    OcrText {
        text: String,
    },
    EndOfVideo {
        text: String,
    },
}

impl InterleavedElement {
    pub fn image(image_ref: impl Into<String>, timestamp_s: f64) -> Self {
        InterleavedElement::Image {
            image_ref: image_ref.into(),
            timestamp_s: Some(timestamp_s),
        }
    }

    pub fn asr(text: impl Into<String>) -> Self {
        InterleavedElement::AsrText { text: text.into() }
    }

    pub fn ocr(text: impl Into<String>) -> Self {
        InterleavedElement::OcrText { text: text.into() }
    }

    pub fn end_of_video(token: impl Into<String>) -> Self {
        InterleavedElement::EndOfVideo { text: token.into() }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, InterleavedElement::Image { .. })
    }

    pub fn is_end_of_video(&self) -> bool {
        matches!(self, InterleavedElement::EndOfVideo { .. })
    }

    /// Text payload of ASR, OCR and end-of-video elements.
    pub fn text(&self) -> Option<&str> {
        match self {
            InterleavedElement::Image { .. } => None,
            InterleavedElement::AsrText { text }
            | InterleavedElement::OcrText { text }
            | InterleavedElement::EndOfVideo { text } => Some(text),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            InterleavedElement::Image { .. } => "image",
            InterleavedElement::AsrText { .. } => "asr_text",
            InterleavedElement::OcrText { .. } => "ocr_text",
            InterleavedElement::EndOfVideo { .. } => "end_of_video",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedSample {
    pub sample_id: String,
    pub source_video_ids: Vec<String>,
    pub elements: Vec<InterleavedElement>,
    pub n_images: usize,
    pub n_text_tokens: usize,
    /// Set when a single fragment exceeded the packing budget on its own.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversized: bool,
}

impl InterleavedSample {
    pub fn images(&self) -> impl Iterator<Item = &InterleavedElement> {
        self.elements.iter().filter(|e| e.is_image())
    }

    pub fn image_refs(&self) -> Vec<&str> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                InterleavedElement::Image { image_ref, .. } => Some(image_ref.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Splits the element list at end-of-video markers. Segment `k` belongs to
    /// `source_video_ids[k]`; a trailing empty segment after the last marker is
    /// dropped.
    pub fn video_segments(&self) -> Vec<&[InterleavedElement]> {
        let mut segments = Vec::new();
        let mut start = 0;
        for (idx, element) in self.elements.iter().enumerate() {
            if element.is_end_of_video() {
                segments.push(&self.elements[start..idx]);
                start = idx + 1;
            }
        }
        if start < self.elements.len() {
            segments.push(&self.elements[start..]);
        }
        segments
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knowledge_point_id_joins_layers() {
        let kp = KnowledgePoint::new(
            "Mathematics",
            "Elementary Mathematics",
            "Rational and Irrational Numbers",
            "the definition of Irrational Numbers",
        );
        assert_eq!(
            kp.id(),
            "Mathematics/Elementary Mathematics/Rational and Irrational Numbers/the definition of Irrational Numbers"
        );
    }

    #[test]
    fn knowledge_point_id_escapes_separators() {
        let a = KnowledgePoint::new("a/b", "c", "d", "e");
        let b = KnowledgePoint::new("a", "b/c", "d", "e");
        assert_ne!(a.id(), b.id());
        assert_eq!(a.id(), "a%2Fb/c/d/e");
    }

    #[test]
    fn segment_checks() {
        assert!(AsrSegment::new(0.0, 1.0, "x").check().is_ok());
        assert!(AsrSegment::new(1.0, 1.0, "x").check().is_err());
        assert!(AsrSegment::new(0.0, 1.0, " ").check().is_err());
        let silent = AsrSegment {
            silent: true,
            ..AsrSegment::new(0.0, 1.0, "")
        };
        assert!(silent.check().is_ok());
        let overlapping = [AsrSegment::new(0.0, 2.0, "a"), AsrSegment::new(1.5, 3.0, "b")];
        assert!(check_segment_order(&overlapping).is_err());
    }

    #[test]
    fn video_segments_follow_end_of_video_markers() {
        let eov = "<eov>";
        let sample = InterleavedSample {
            sample_id: "s".into(),
            source_video_ids: vec!["a".into(), "b".into()],
            elements: vec![
                InterleavedElement::image("a.png", 0.0),
                InterleavedElement::asr("x"),
                InterleavedElement::end_of_video(eov),
                InterleavedElement::image("b.png", 0.0),
                InterleavedElement::end_of_video(eov),
            ],
            n_images: 2,
            n_text_tokens: 3,
            oversized: false,
        };
        let segs = sample.video_segments();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].len(), 2);
        assert_eq!(segs[1].len(), 1);
    }
}
