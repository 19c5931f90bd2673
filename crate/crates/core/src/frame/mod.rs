//! Keyframe extraction, scoring and OCR deduplication.

mod extract;
mod ocr;
mod ssim;

pub use extract::{
    extract_keyframes, extract_keyframes_pixel, extract_keyframes_semantic, extract_keyframes_ssim, sample_frames,
    sample_times, select_keyframes, Frame,
};
pub use ocr::{dedup_ocr, jaccard, ocr_and_filter, token_set, OcrOutcome};
pub use ssim::{compute_ssim, mean_abs_diff, window_ssim, C1, C2, WINDOW};
