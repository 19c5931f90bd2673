//! Frame sampling and the reference-frame keyframe selectors.

use std::path::Path;

use image::GrayImage;

use super::ssim::{compute_ssim, mean_abs_diff};
use crate::corpus::{KeyframeExtractor, PipelineConfig};
use crate::error::{Error, Result};
use crate::media::{MediaError, MediaToolkit};
use crate::services::{cosine, FrameEmbedder};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp_s: f64,
    pub pixels: GrayImage,
}

/// Timestamps every `1/fps` seconds from `start_s`, strictly before `end_s`,
/// and at least one.
pub fn sample_times(start_s: f64, end_s: f64, fps: f64) -> Result<Vec<f64>> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    if !(end_s >= start_s) {
        return Err(Error::InvalidArgument(format!("empty span {start_s}..{end_s}")));
    }
    let n = (((end_s - start_s) * fps - 1e-9).ceil() as usize).max(1);
    Ok((0..n).map(|i| start_s + i as f64 / fps).collect())
}

pub fn sample_frames(
    toolkit: &dyn MediaToolkit,
    video: &Path,
    start_s: f64,
    end_s: f64,
    fps: f64,
) -> Result<Vec<Frame>> {
    let times = sample_times(start_s, end_s, fps)?;
    let images = toolkit.frames_at(video, &times)?;
    if images.len() != times.len() {
        return Err(MediaError::Decode {
            path: video.to_path_buf(),
            message: format!("asked for {} frames, decoded {}", times.len(), images.len()),
        }
        .into());
    }
    Ok(times
        .into_iter()
        .zip(images)
        .enumerate()
        .map(|(index, (timestamp_s, pixels))| Frame {
            index,
            timestamp_s,
            pixels,
        })
        .collect())
}

/// Reference-frame selection: the first frame is a keyframe and becomes the
/// reference; each later frame that `changed(reference, i)` reports as
/// different is a keyframe and replaces the reference. Returns positions.
pub fn select_keyframes<E>(n: usize, mut changed: impl FnMut(usize, usize) -> Result<bool, E>) -> Result<Vec<usize>, E> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut keys = vec![0];
    let mut reference = 0;
    for i in 1..n {
        if changed(reference, i)? {
            keys.push(i);
            reference = i;
        }
    }
    Ok(keys)
}

/// Keyframes where SSIM against the reference drops below `t`.
pub fn extract_keyframes_ssim(frames: &[Frame], t: f64) -> Result<Vec<usize>> {
    select_keyframes(frames.len(), |r, i| Ok(compute_ssim(&frames[r].pixels, &frames[i].pixels)? < t))
}

/// Keyframes where the mean absolute pixel difference exceeds `threshold`.
pub fn extract_keyframes_pixel(frames: &[Frame], threshold: f64) -> Result<Vec<usize>> {
    select_keyframes(frames.len(), |r, i| {
        Ok(mean_abs_diff(&frames[r].pixels, &frames[i].pixels)? > threshold)
    })
}

/// Keyframes where embedding cosine similarity drops below `cos_threshold`.
pub fn extract_keyframes_semantic(
    frames: &[Frame],
    embedder: &dyn FrameEmbedder,
    cos_threshold: f64,
) -> Result<Vec<usize>> {
    let images: Vec<&GrayImage> = frames.iter().map(|f| &f.pixels).collect();
    let vectors = embedder.embed_frames(&images)?;
    select_keyframes(frames.len(), |r, i| Ok(cosine(&vectors[r], &vectors[i]) < cos_threshold))
}

/// Runs the configured extractor. With a `carried` reference from the
/// previous clip the first frame must also differ from it to be selected.
pub fn extract_keyframes(
    frames: &[Frame],
    config: &PipelineConfig,
    embedder: &dyn FrameEmbedder,
    carried: Option<&Frame>,
) -> Result<Vec<usize>> {
    let mut chain: Vec<Frame> = Vec::with_capacity(frames.len() + 1);
    if let Some(reference) = carried {
        if reference.pixels.dimensions() == frames.first().map(|f| f.pixels.dimensions()).unwrap_or_default() {
            chain.push(reference.clone());
        }
    }
    let offset = chain.len();
    chain.extend_from_slice(frames);
    let keys = match config.keyframe_extractor {
        KeyframeExtractor::Ssim => extract_keyframes_ssim(&chain, config.ssim_threshold)?,
        KeyframeExtractor::Pixel => extract_keyframes_pixel(&chain, config.pixel_threshold)?,
        KeyframeExtractor::Semantic => extract_keyframes_semantic(&chain, embedder, config.semantic_cos_threshold)?,
    };
    Ok(keys.into_iter().filter(|&k| k >= offset).map(|k| k - offset).collect())
}
