//! Chronological interleaving of clips and packing into training samples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    encode_corpus, sample_text_tokens, ClipStatus, CorpusRules, CorpusStats, InterleavedElement, InterleavedSample,
    Keyframe, PackingStrategy, Tokenizer, VideoClip,
};
use crate::error::{Error, Result};
use crate::util;

/// A clip with the keyframes that survived scoring, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipBundle {
    pub clip: VideoClip,
    pub keyframes: Vec<Keyframe>,
}

/// Kept clips give `[frames…, ocr?, asr]`; visually dropped clips give only
/// their ASR. OCR text of one clip is joined by newlines.
pub fn interleave_video(bundles: &[ClipBundle]) -> Result<Vec<InterleavedElement>> {
    let mut out = Vec::new();
    for b in bundles {
        match b.clip.status {
            ClipStatus::Kept => {
                for kf in &b.keyframes {
                    out.push(InterleavedElement::image(&kf.image_ref, kf.timestamp_s));
                }
                let ocr: Vec<&str> = b
                    .keyframes
                    .iter()
                    .filter(|k| k.ocr_kept)
                    .filter_map(|k| k.ocr_text.as_deref())
                    .collect();
                if !ocr.is_empty() {
                    out.push(InterleavedElement::ocr(ocr.join("\n")));
                }
            }
            ClipStatus::DroppedVisual => {}
            ClipStatus::Pending => {
                return Err(Error::Stage {
                    stage: "assemble".into(),
                    keys: vec![b.clip.clip_id.clone()],
                })
            }
        }
        if !b.clip.asr_text.trim().is_empty() {
            out.push(InterleavedElement::asr(b.clip.asr_text.trim()));
        }
    }
    Ok(out)
}

/// Atomic packing unit: a run of images with the text that follows it up to
/// the next image. Text before a video's first image forms its own fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub elements: Vec<InterleavedElement>,
    pub n_images: usize,
    pub n_tokens: usize,
}

pub fn fragments(elements: &[InterleavedElement], tokenizer: &dyn Tokenizer) -> Vec<Fragment> {
    let mut groups: Vec<Vec<InterleavedElement>> = Vec::new();
    let mut prev_image = false;
    for e in elements {
        let starts = e.is_image() && !prev_image;
        if starts || groups.is_empty() {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("pushed above").push(e.clone());
        prev_image = e.is_image();
    }
    groups
        .into_iter()
        .map(|elements| Fragment {
            n_images: elements.iter().filter(|e| e.is_image()).count(),
            n_tokens: sample_text_tokens(&elements, tokenizer),
            elements,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoElements {
    pub video_id: String,
    pub elements: Vec<InterleavedElement>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackConfig<'a> {
    pub strategy: PackingStrategy,
    pub token_budget: usize,
    pub max_images: usize,
    pub eov_token: &'a str,
}

/// Content left out of the corpus, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub video_ids: Vec<String>,
    pub reason: String,
    pub n_elements: usize,
    pub n_tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PackResult {
    pub samples: Vec<InterleavedSample>,
    pub excluded: Vec<Exclusion>,
}

struct Builder<'a> {
    cfg: PackConfig<'a>,
    tokenizer: &'a dyn Tokenizer,
    result: PackResult,
    elements: Vec<InterleavedElement>,
    video_ids: Vec<String>,
    n_images: usize,
    n_tokens: usize,
    oversized: bool,
}

impl<'a> Builder<'a> {
    fn new(cfg: PackConfig<'a>, tokenizer: &'a dyn Tokenizer) -> Self {
        Self {
            cfg,
            tokenizer,
            result: PackResult::default(),
            elements: Vec::new(),
            video_ids: Vec::new(),
            n_images: 0,
            n_tokens: 0,
            oversized: false,
        }
    }

    fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    fn fits(&self, images: usize, tokens: usize) -> bool {
        self.n_images + images <= self.cfg.max_images && self.n_tokens + tokens <= self.cfg.token_budget
    }

    fn push(&mut self, video_id: &str, fragment: &Fragment, eov: bool) {
        if self.video_ids.last().map(String::as_str) != Some(video_id) {
            self.video_ids.push(video_id.to_string());
        }
        self.elements.extend(fragment.elements.iter().cloned());
        self.n_images += fragment.n_images;
        self.n_tokens += fragment.n_tokens;
        if eov {
            self.elements.push(InterleavedElement::end_of_video(self.cfg.eov_token));
            self.n_tokens += 1;
        }
    }

    fn flush(&mut self) {
        if self.elements.is_empty() {
            return;
        }
        let elements = std::mem::take(&mut self.elements);
        let video_ids = std::mem::take(&mut self.video_ids);
        let oversized = std::mem::take(&mut self.oversized);
        self.n_images = 0;
        self.n_tokens = 0;
        let n_images = elements.iter().filter(|e| e.is_image()).count();
        let n_text_tokens = sample_text_tokens(&elements, self.tokenizer);
        if n_images == 0 {
            tracing::info!(videos = ?video_ids, "suppressing sample without images");
            self.result.excluded.push(Exclusion {
                video_ids,
                reason: "no_images".into(),
                n_elements: elements.len(),
                n_tokens: n_text_tokens,
            });
            return;
        }
        self.result.samples.push(InterleavedSample {
            sample_id: format!("s{:06}", self.result.samples.len()),
            source_video_ids: video_ids,
            elements,
            n_images,
            n_text_tokens,
            oversized,
        });
    }

    /// Greedy step shared by the budgeted strategies.
    fn add(&mut self, video_id: &str, fragment: &Fragment, eov: bool) {
        let tokens = fragment.n_tokens + usize::from(eov);
        if !self.is_empty() && !self.fits(fragment.n_images, tokens) {
            self.flush();
        }
        let alone_too_big = fragment.n_images > self.cfg.max_images || tokens > self.cfg.token_budget;
        self.push(video_id, fragment, eov);
        if alone_too_big {
            self.oversized = true;
            self.flush();
        }
    }
}

/// Packs per-video element lists into samples.
///
/// * `per_video`: one sample per video, unbounded.
/// * `split_video`: a video's fragments fill samples greedily under both budgets.
/// * `concat`: fragments of consecutive videos share samples; each video's
///   last fragment is followed by the end-of-video token, costing one token.
///
/// Fragments are never split; one that alone exceeds a budget becomes its own
/// sample flagged `oversized`. Videos without images are excluded up front.
pub fn pack(videos: &[VideoElements], cfg: PackConfig<'_>, tokenizer: &dyn Tokenizer) -> PackResult {
    let mut b = Builder::new(cfg, tokenizer);
    for v in videos {
        if !v.elements.iter().any(|e| e.is_image()) {
            if !v.elements.is_empty() {
                b.result.excluded.push(Exclusion {
                    video_ids: vec![v.video_id.clone()],
                    reason: "text_only_video".into(),
                    n_elements: v.elements.len(),
                    n_tokens: sample_text_tokens(&v.elements, tokenizer),
                });
            }
            continue;
        }
        let frags = fragments(&v.elements, tokenizer);
        match cfg.strategy {
            PackingStrategy::PerVideo => {
                for f in &frags {
                    b.push(&v.video_id, f, false);
                }
                b.flush();
            }
            PackingStrategy::SplitVideo => {
                for f in &frags {
                    b.add(&v.video_id, f, false);
                }
                b.flush();
            }
            PackingStrategy::Concat => {
                let last = frags.len() - 1;
                for (i, f) in frags.iter().enumerate() {
                    b.add(&v.video_id, f, i == last);
                }
            }
        }
    }
    b.flush();
    b.result
}

/// Totals for checking that packing neither lost nor invented content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub images_in: usize,
    pub tokens_in: usize,
    pub videos_in: usize,
    pub images_out: usize,
    pub tokens_out: usize,
    pub eov_out: usize,
    pub images_excluded: usize,
    pub tokens_excluded: usize,
}

impl Conservation {
    pub fn of(videos: &[VideoElements], result: &PackResult, tokenizer: &dyn Tokenizer) -> Self {
        let images_in = videos.iter().flat_map(|v| &v.elements).filter(|e| e.is_image()).count();
        let tokens_in = videos.iter().map(|v| sample_text_tokens(&v.elements, tokenizer)).sum();
        let eov_out = result
            .samples
            .iter()
            .flat_map(|s| &s.elements)
            .filter(|e| e.is_end_of_video())
            .count();
        let images_excluded = 0;
        let tokens_excluded = result.excluded.iter().map(|e| e.n_tokens).sum();
        Self {
            images_in,
            tokens_in,
            videos_in: videos.len(),
            images_out: result.samples.iter().map(|s| s.n_images).sum(),
            tokens_out: result.samples.iter().map(|s| s.n_text_tokens).sum(),
            eov_out,
            images_excluded,
            tokens_excluded,
        }
    }

    /// Every image is emitted and every token is emitted or excluded, plus
    /// one token per end-of-video marker.
    pub fn holds(&self) -> bool {
        self.images_in == self.images_out + self.images_excluded
            && self.tokens_in + self.eov_out == self.tokens_out + self.tokens_excluded
    }
}

/// Writes the corpus atomically and returns its statistics.
pub fn emit(samples: &[InterleavedSample], out: &Path, rules: &CorpusRules<'_>) -> Result<CorpusStats> {
    let bytes = encode_corpus(samples, rules)?;
    util::write_atomic(out, &bytes)?;
    Ok(CorpusStats::of(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WhitespaceTokenizer;
    use proptest::prelude::*;

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    fn kf(clip: &str, t: f64, ocr: Option<&str>) -> Keyframe {
        Keyframe {
            frame_id: format!("{clip}-{t}"),
            clip_id: clip.into(),
            timestamp_s: t,
            image_ref: format!("frames/{clip}/{t}.png"),
            score: Some(5),
            ocr_text: ocr.map(Into::into),
            ocr_kept: ocr.is_some(),
        }
    }

    fn bundle(id: &str, status: ClipStatus, asr: &str, frames: Vec<Keyframe>) -> ClipBundle {
        ClipBundle {
            clip: VideoClip {
                clip_id: id.into(),
                video_id: "v".into(),
                start_s: 0.0,
                end_s: 10.0,
                asr_text: asr.into(),
                caption: None,
                caption_asr_similarity: None,
                status,
            },
            keyframes: frames,
        }
    }

    fn kinds(e: &[InterleavedElement]) -> Vec<&'static str> {
        e.iter()
            .map(|e| match e {
                InterleavedElement::Image { .. } => "img",
                InterleavedElement::AsrText { .. } => "asr",
                InterleavedElement::OcrText { .. } => "ocr",
                InterleavedElement::EndOfVideo { .. } => "eov",
            })
            .collect()
    }

    #[test]
    fn interleave_pattern() {
        let e = interleave_video(&[
            bundle("c1", ClipStatus::Kept, "a", vec![kf("c1", 1.0, Some("x")), kf("c1", 2.0, None)]),
            bundle("c2", ClipStatus::DroppedVisual, "b", vec![]),
            bundle("c3", ClipStatus::Kept, "c", vec![kf("c3", 21.0, None)]),
        ])
        .unwrap();
        assert_eq!(kinds(&e), ["img", "img", "ocr", "asr", "asr", "img", "asr"]);
        assert!(interleave_video(&[]).unwrap().is_empty());
    }

    /// Video whose fragments cost exactly `costs` tokens, one image each.
    fn video(id: &str, costs: &[usize]) -> VideoElements {
        let mut elements = Vec::new();
        for (i, &c) in costs.iter().enumerate() {
            elements.push(InterleavedElement::image(format!("{id}/{i}.png"), i as f64));
            if c > 0 {
                elements.push(InterleavedElement::asr(words(c)));
            }
        }
        VideoElements {
            video_id: id.into(),
            elements,
        }
    }

    fn cfg(strategy: PackingStrategy, budget: usize, max_images: usize) -> PackConfig<'static> {
        PackConfig {
            strategy,
            token_budget: budget,
            max_images,
            eov_token: "<|end_of_video|>",
        }
    }

    #[test]
    fn concat_hand_trace() {
        let videos = [video("V1", &[700, 300]), video("V2", &[800])];
        let r = pack(&videos, cfg(PackingStrategy::Concat, 1200, 32), &WhitespaceTokenizer);
        let tokens: Vec<_> = r.samples.iter().map(|s| s.n_text_tokens).collect();
        assert_eq!(tokens, [1001, 801]);
        assert_eq!(kinds(&r.samples[0].elements), ["img", "asr", "img", "asr", "eov"]);
        assert_eq!(r.samples[1].source_video_ids, ["V2"]);
    }

    #[test]
    fn per_video_is_one_sample_each() {
        let videos = [video("a", &[5000]), video("b", &[1]), video("c", &[3, 3])];
        let r = pack(&videos, cfg(PackingStrategy::PerVideo, 10, 1), &WhitespaceTokenizer);
        assert_eq!(r.samples.len(), 3);
        assert!(r.samples.iter().all(|s| !s.elements.iter().any(|e| e.is_end_of_video())));
    }

    #[test]
    fn oversized_fragment_is_flagged() {
        let videos = [video("a", &[10, 50, 10])];
        let r = pack(&videos, cfg(PackingStrategy::SplitVideo, 20, 32), &WhitespaceTokenizer);
        let flags: Vec<_> = r.samples.iter().map(|s| (s.n_text_tokens, s.oversized)).collect();
        assert_eq!(flags, [(10, false), (50, true), (10, false)]);
    }

    #[test]
    fn text_only_content_is_logged() {
        let videos = [
            VideoElements {
                video_id: "t".into(),
                elements: vec![InterleavedElement::asr("only words here")],
            },
            VideoElements {
                video_id: "lead".into(),
                elements: vec![
                    InterleavedElement::asr("intro words"),
                    InterleavedElement::image("lead/0.png", 3.0),
                    InterleavedElement::asr("body"),
                ],
            },
        ];
        let r = pack(&videos, cfg(PackingStrategy::SplitVideo, 2, 32), &WhitespaceTokenizer);
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.excluded.len(), 2);
        assert_eq!(r.excluded[0].reason, "text_only_video");
        assert_eq!(r.excluded[1].reason, "no_images");
        assert!(Conservation::of(&videos, &r, &WhitespaceTokenizer).holds());
    }

    #[test]
    fn emitting_zero_samples_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("corpus.jsonl");
        let rules = CorpusRules {
            eov_token: "<|end_of_video|>",
            tokenizer: &WhitespaceTokenizer,
        };
        let stats = emit(&[], &out, &rules).unwrap();
        assert_eq!(stats.n_samples, 0);
        assert_eq!(std::fs::read(&out).unwrap(), b"");
    }

    fn strategy() -> impl Strategy<Value = PackingStrategy> {
        prop_oneof![
            Just(PackingStrategy::PerVideo),
            Just(PackingStrategy::SplitVideo),
            Just(PackingStrategy::Concat)
        ]
    }

    proptest! {
        #[test]
        fn budgets_and_conservation(
            costs in proptest::collection::vec(proptest::collection::vec(0usize..60, 1..6), 1..6),
            budget in 5usize..120,
            max_images in 1usize..4,
            strategy in strategy(),
        ) {
            let videos: Vec<_> = costs.iter().enumerate().map(|(i, c)| video(&format!("v{i}"), c)).collect();
            let r = pack(&videos, cfg(strategy, budget, max_images), &WhitespaceTokenizer);
            let c = Conservation::of(&videos, &r, &WhitespaceTokenizer);
            prop_assert!(c.holds(), "{:?}", c);
            if strategy == PackingStrategy::Concat {
                prop_assert_eq!(c.eov_out, videos.len());
            }
            let rules = CorpusRules { eov_token: "<|end_of_video|>", tokenizer: &WhitespaceTokenizer };
            for s in &r.samples {
                prop_assert!(crate::corpus::check_sample(s, &rules).is_empty());
                if strategy != PackingStrategy::PerVideo && !s.oversized {
                    prop_assert!(s.n_text_tokens <= budget);
                    prop_assert!(s.n_images <= max_images);
                }
            }
            let order: Vec<_> = r.samples.iter().flat_map(|s| s.source_video_ids.clone()).collect();
            let mut dedup = order.clone();
            dedup.dedup();
            prop_assert!(dedup.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
