//! Procedural slide videos described by a small JSON file.
//!
//! A `*.slides.json` file stands in for an encoded video: frames are rendered
//! on demand from the scene list and the audio track is a deterministic
//! integer waveform, so every decode is bit-reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MediaError, MediaInfo, MediaToolkit, AUDIO_SAMPLE_RATE};

pub const SLIDE_VIDEO_EXT: &str = "slides.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Light background with text lines revealed in steps.
    Slide,
    /// Presenter in front of a dark backdrop.
    Speaker,
    Blank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: SceneKind,
    #[serde(default)]
    pub seed: u64,
    /// Number of text lines on a slide.
    #[serde(default)]
    pub lines: u32,
    /// Lines appear in this many equal time steps.
    #[serde(default = "one")]
    pub reveal_steps: u32,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideVideo {
    pub duration_s: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "yes")]
    pub has_audio: bool,
    #[serde(default)]
    pub audio_seed: u64,
    /// Per-pixel uniform noise amplitude in gray levels.
    #[serde(default)]
    pub noise: u8,
    pub scenes: Vec<Scene>,
}

impl SlideVideo {
    pub fn load(path: &Path) -> Result<Self, MediaError> {
        let raw = fs::read(path).map_err(|source| MediaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&raw).map_err(|e| MediaError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn scene_at(&self, t: f64) -> Option<&Scene> {
        self.scenes
            .iter()
            .find(|s| s.start_s <= t && t < s.end_s)
            .or_else(|| self.scenes.iter().rev().find(|s| t == s.end_s && t == self.duration_s))
    }

    /// Index of the reveal step visible at `t` within `scene`.
    pub fn reveal_step(scene: &Scene, t: f64) -> u32 {
        let steps = scene.reveal_steps.max(1);
        let span = (scene.end_s - scene.start_s).max(f64::MIN_POSITIVE);
        let frac = ((t - scene.start_s) / span).clamp(0.0, 1.0);
        ((frac * f64::from(steps)).floor() as u32).min(steps - 1)
    }

    pub fn is_occluded(scene: &Scene, t: f64) -> bool {
        scene
            .occlusions
            .iter()
            .any(|o| o.start_s <= t && t < o.end_s)
    }

    pub fn render(&self, t: f64) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let t_ms = (t * 1000.0).round() as u64;
        let mut img = GrayImage::new(w, h);
        let Some(scene) = self.scene_at(t) else {
            return img;
        };
        match scene.kind {
            SceneKind::Blank => fill(&mut img, 16),
            SceneKind::Slide => draw_slide(&mut img, scene, Self::reveal_step(scene, t)),
            SceneKind::Speaker => draw_speaker(&mut img, scene, t_ms),
        }
        if Self::is_occluded(scene, t) {
            let (x0, y0) = (w * 2 / 5, h / 3);
            for y in y0..h {
                for x in x0..w {
                    img.put_pixel(x, y, Luma([38]));
                }
            }
        }
        if self.noise > 0 {
            let amp = i16::from(self.noise);
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ t_ms.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for p in img.pixels_mut() {
                let delta: i16 = rng.random_range(-amp..=amp);
                p.0[0] = (i16::from(p.0[0]) + delta).clamp(0, 255) as u8;
            }
        }
        img
    }

    pub fn audio_samples(&self) -> Vec<i16> {
        if !self.has_audio {
            return Vec::new();
        }
        let n = (self.duration_s * f64::from(AUDIO_SAMPLE_RATE)).round() as usize;
        let period = 40 + (self.audio_seed % 41) as i64;
        let half = period / 2;
        let mut state = self.audio_seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|i| {
                let phase = i as i64 % period;
                let tri = if phase < half { phase } else { period - phase };
                let wave = (tri * 6000 / half.max(1)) - 3000;
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let jitter = (state % 201) as i64 - 100;
                (wave + jitter) as i16
            })
            .collect()
    }
}

fn fill(img: &mut GrayImage, v: u8) {
    for p in img.pixels_mut() {
        p.0[0] = v;
    }
}

fn draw_slide(img: &mut GrayImage, scene: &Scene, step: u32) {
    let (w, h) = (img.width(), img.height());
    fill(img, 236);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    // title bar
    let title_len = rng.random_range(w / 3..=w * 3 / 4).max(1);
    for y in 2..5.min(h) {
        for x in 3..(3 + title_len).min(w) {
            img.put_pixel(x, y, Luma([24]));
        }
    }
    let steps = scene.reveal_steps.max(1);
    let visible = (scene.lines * (step + 1)).div_ceil(steps);
    for line in 0..scene.lines {
        let y = 9 + line * 5;
        let words: u32 = rng.random_range(2..=6);
        let mut x = 3u32;
        let mut spans = Vec::new();
        for _ in 0..words {
            let len: u32 = rng.random_range(3..=10);
            spans.push((x, len));
            x += len + 2;
        }
        if line >= visible || y + 2 > h {
            continue;
        }
        for (x0, len) in spans {
            for yy in y..y + 2 {
                for xx in x0..(x0 + len).min(w.saturating_sub(2)) {
                    img.put_pixel(xx, yy, Luma([40]));
                }
            }
        }
    }
}

fn draw_speaker(img: &mut GrayImage, scene: &Scene, t_ms: u64) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in 0..h {
        for x in 0..w {
            img.put_pixel(x as u32, y as u32, Luma([(70 + y * 40 / h.max(1)) as u8]));
        }
    }
    let sway = ((t_ms / 700 + scene.seed) % 3) as i64 - 1;
    let (cx, cy) = (w / 2 + sway, h * 2 / 5);
    let (rx, ry) = ((w / 9).max(2), (h / 5).max(2));
    for y in 0..h {
        for x in 0..w {
            let dx = (x - cx) as f64 / rx as f64;
            let dy = (y - cy) as f64 / ry as f64;
            if dx * dx + dy * dy <= 1.0 {
                img.put_pixel(x as u32, y as u32, Luma([182]));
            } else if y > cy + ry && (x - cx).abs() < w / 4 {
                img.put_pixel(x as u32, y as u32, Luma([52]));
            }
        }
    }
}

/// Decodes `*.slides.json` synthetic videos.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticToolkit;

impl MediaToolkit for SyntheticToolkit {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn locate(&self, media_dir: &Path, video_id: &str) -> Option<PathBuf> {
        let path = media_dir.join(format!("{video_id}.{SLIDE_VIDEO_EXT}"));
        path.is_file().then_some(path)
    }

    fn probe(&self, video: &Path) -> Result<MediaInfo, MediaError> {
        let v = SlideVideo::load(video)?;
        Ok(MediaInfo {
            duration_s: v.duration_s,
            width: v.width,
            height: v.height,
            has_audio: v.has_audio,
        })
    }

    fn extract_audio(&self, video: &Path, out: &Path) -> Result<(), MediaError> {
        let v = SlideVideo::load(video)?;
        if !v.has_audio {
            return Err(MediaError::NoAudioTrack(video.to_path_buf()));
        }
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: AUDIO_SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent).map_err(|source| MediaError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let to_err = |e: hound::Error| MediaError::Decode {
            path: out.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = hound::WavWriter::create(out, spec).map_err(to_err)?;
        for s in v.audio_samples() {
            writer.write_sample(s).map_err(to_err)?;
        }
        writer.finalize().map_err(to_err)
    }

    fn frames_at(&self, video: &Path, timestamps: &[f64]) -> Result<Vec<GrayImage>, MediaError> {
        let v = SlideVideo::load(video)?;
        timestamps
            .iter()
            .map(|&t| {
                if t < 0.0 || t > v.duration_s {
                    Err(MediaError::Decode {
                        path: video.to_path_buf(),
                        message: format!("timestamp {t} outside [0, {}]", v.duration_s),
                    })
                } else {
                    Ok(v.render(t))
                }
            })
            .collect()
    }

    fn check(&self) -> Result<String, MediaError> {
        Ok("synthetic slide renderer".to_string())
    }
}
