use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EOV_TOKEN: &str = "<|end_of_video|>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PackingStrategy {
    /// One sample per video, no budget.
    PerVideo,
    /// Split each video at fragment boundaries to fit the budget.
    SplitVideo,
    /// Concatenate fragments across videos with an end-of-video marker.
    #[default]
    Concat,
}

impl std::str::FromStr for PackingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_video" => Ok(PackingStrategy::PerVideo),
            "split_video" => Ok(PackingStrategy::SplitVideo),
            "concat" => Ok(PackingStrategy::Concat),
            other => Err(Error::InvalidArgument(format!(
                "unknown packing strategy `{other}` (expected per_video, split_video or concat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeExtractor {
    #[default]
    Ssim,
    /// Mean absolute pixel difference.
    Pixel,
    /// Cosine similarity of image embeddings.
    Semantic,
}

/// Every tunable of the curation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // collection
    pub top_k_search_results: usize,

    // video level
    pub min_duration_s: f64,
    pub min_asr_tokens: usize,
    /// Language tags accepted as English (prefix match on the primary subtag).
    pub accepted_languages: Vec<String>,
    pub criteria_pass_threshold: u8,
    pub judges: Vec<String>,
    /// Ablation knob: build clips from raw instead of refined ASR.
    pub use_refined_asr: bool,

    // clip level
    pub clip_target_s: f64,
    pub clip_min_s: f64,
    pub clip_max_s: f64,
    pub caption_asr_sim_threshold: f64,
    pub caption_max_frames: usize,

    // keyframe level
    pub frame_sample_fps: f64,
    pub keyframe_extractor: KeyframeExtractor,
    #[serde(rename = "ssim_threshold_T", alias = "ssim_threshold")]
    pub ssim_threshold: f64,
    pub pixel_threshold: f64,
    pub semantic_cos_threshold: f64,
    pub carry_reference_across_clips: bool,
    /// Ablation knob: skip OCR and keyframe scoring entirely.
    pub ocr_enabled: bool,
    pub keyframe_score_threshold: u8,
    pub ocr_dedup_jaccard: f64,

    // assembly
    pub packing_strategy: PackingStrategy,
    pub token_budget: usize,
    pub max_images_per_sample: usize,
    pub eov_token: String,

    // metrics
    pub insi_sim_buckets: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            top_k_search_results: 50,
            min_duration_s: 10.0,
            min_asr_tokens: 20,
            accepted_languages: vec!["en".to_string()],
            criteria_pass_threshold: 3,
            judges: vec!["judge-a".to_string(), "judge-b".to_string()],
            use_refined_asr: true,
            clip_target_s: 15.0,
            clip_min_s: 10.0,
            clip_max_s: 20.0,
            caption_asr_sim_threshold: 0.35,
            caption_max_frames: 8,
            frame_sample_fps: 1.0,
            keyframe_extractor: KeyframeExtractor::Ssim,
            ssim_threshold: 0.85,
            pixel_threshold: 1.0,
            semantic_cos_threshold: 0.98,
            carry_reference_across_clips: false,
            ocr_enabled: true,
            keyframe_score_threshold: 3,
            ocr_dedup_jaccard: 0.8,
            packing_strategy: PackingStrategy::Concat,
            token_budget: 4096,
            max_images_per_sample: 32,
            eov_token: DEFAULT_EOV_TOKEN.to_string(),
            insi_sim_buckets: (4..=8).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut require = |ok: bool, msg: &str| {
            if !ok {
                problems.push(msg.to_string());
            }
        };
        require(
            self.ssim_threshold > 0.0 && self.ssim_threshold < 1.0,
            "ssim_threshold_T must lie in (0, 1)",
        );
        require(self.frame_sample_fps > 0.0, "frame_sample_fps must be positive");
        require(
            self.clip_min_s <= self.clip_target_s && self.clip_target_s <= self.clip_max_s,
            "clip_min_s <= clip_target_s <= clip_max_s must hold",
        );
        require(self.clip_min_s > 0.0, "clip_min_s must be positive");
        require(self.min_duration_s >= 0.0, "min_duration_s must be non-negative");
        require(
            (1..=5).contains(&self.criteria_pass_threshold),
            "criteria_pass_threshold must lie in 1..=5",
        );
        require(
            (1..=5).contains(&self.keyframe_score_threshold),
            "keyframe_score_threshold must lie in 1..=5",
        );
        require(
            (0.0..=1.0).contains(&self.ocr_dedup_jaccard),
            "ocr_dedup_jaccard must lie in [0, 1]",
        );
        require(
            (-1.0..=1.0).contains(&self.caption_asr_sim_threshold),
            "caption_asr_sim_threshold must lie in [-1, 1]",
        );
        require(
            (-1.0..=1.0).contains(&self.semantic_cos_threshold),
            "semantic_cos_threshold must lie in [-1, 1]",
        );
        require(self.pixel_threshold >= 0.0, "pixel_threshold must be non-negative");
        require(self.caption_max_frames >= 1, "caption_max_frames must be at least 1");
        require(self.token_budget > 0, "token_budget must be positive");
        require(
            self.max_images_per_sample > 0,
            "max_images_per_sample must be positive",
        );
        require(!self.eov_token.trim().is_empty(), "eov_token must not be blank");
        require(
            self.eov_token.split_whitespace().count() == 1,
            "eov_token must be a single whitespace-free token",
        );
        require(self.top_k_search_results > 0, "top_k_search_results must be positive");
        require(!self.judges.is_empty(), "at least one judge must be configured");
        require(
            self.insi_sim_buckets.iter().all(|&l| l >= 2),
            "insi_sim_buckets entries must be at least 2",
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn is_accepted_language(&self, tag: &str) -> bool {
        let primary = tag.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase();
        self.accepted_languages
            .iter()
            .any(|lang| lang.eq_ignore_ascii_case(&primary))
    }
}
