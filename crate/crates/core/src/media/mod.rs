//! External media toolkit boundary: probing, audio extraction and frame decoding.

mod ffmpeg;
mod synthetic;

use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

pub use ffmpeg::FfmpegToolkit;
pub use synthetic::{Occlusion, Scene, SceneKind, SlideVideo, SyntheticToolkit, SLIDE_VIDEO_EXT};

pub const AUDIO_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("no media found for `{0}`")]
    NotFound(String),
    #[error("media tool `{tool}` is not available: {message}")]
    ToolMissing { tool: String, message: String },
    #[error("`{tool}` exited with {status}: {stderr}")]
    ToolFailed {
        tool: String,
        status: String,
        stderr: String,
    },
    #[error("{0} has no audio track")]
    NoAudioTrack(PathBuf),
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediaInfo {
    pub duration_s: f64,
    pub width: u32,
    pub height: u32,
    pub has_audio: bool,
}

pub trait MediaToolkit: Send + Sync {
    fn name(&self) -> &str;

    /// Finds the media file for `video_id` under `media_dir`.
    fn locate(&self, media_dir: &Path, video_id: &str) -> Option<PathBuf>;

    fn probe(&self, video: &Path) -> Result<MediaInfo, MediaError>;

    /// Writes 16 kHz mono 16-bit PCM WAV audio to `out`.
    fn extract_audio(&self, video: &Path, out: &Path) -> Result<(), MediaError>;

    /// Decodes one grayscale frame per timestamp.
    fn frames_at(&self, video: &Path, timestamps: &[f64]) -> Result<Vec<GrayImage>, MediaError>;

    /// Reports whether the toolkit is usable, with a version string.
    fn check(&self) -> Result<String, MediaError>;
}

/// Synthetic slide videos when present, ffmpeg for everything else.
#[derive(Debug, Clone, Default)]
pub struct AutoToolkit {
    pub synthetic: SyntheticToolkit,
    pub ffmpeg: FfmpegToolkit,
}

impl AutoToolkit {
    fn pick(&self, video: &Path) -> &dyn MediaToolkit {
        if video.to_string_lossy().ends_with(SLIDE_VIDEO_EXT) {
            &self.synthetic
        } else {
            &self.ffmpeg
        }
    }
}

impl MediaToolkit for AutoToolkit {
    fn name(&self) -> &str {
        "auto"
    }

    fn locate(&self, media_dir: &Path, video_id: &str) -> Option<PathBuf> {
        self.synthetic
            .locate(media_dir, video_id)
            .or_else(|| self.ffmpeg.locate(media_dir, video_id))
    }

    fn probe(&self, video: &Path) -> Result<MediaInfo, MediaError> {
        self.pick(video).probe(video)
    }

    fn extract_audio(&self, video: &Path, out: &Path) -> Result<(), MediaError> {
        self.pick(video).extract_audio(video, out)
    }

    fn frames_at(&self, video: &Path, timestamps: &[f64]) -> Result<Vec<GrayImage>, MediaError> {
        self.pick(video).frames_at(video, timestamps)
    }

    fn check(&self) -> Result<String, MediaError> {
        let synthetic = self.synthetic.check()?;
        Ok(match self.ffmpeg.check() {
            Ok(v) => format!("{synthetic}; {v}"),
            Err(e) => format!("{synthetic}; ffmpeg unavailable ({e})"),
        })
    }
}

/// ITU-R BT.601 luma, rounded to the nearest integer.
pub fn luma_601(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

pub fn rgb_to_luma(rgb: &RgbImage) -> GrayImage {
    GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
        let p = rgb.get_pixel(x, y).0;
        image::Luma([luma_601(p[0], p[1], p[2])])
    })
}

/// Loads an image file as BT.601 grayscale.
pub fn load_gray(path: &Path) -> Result<GrayImage, MediaError> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => MediaError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => MediaError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(match img {
        image::DynamicImage::ImageLuma8(gray) => gray,
        other => rgb_to_luma(&other.to_rgb8()),
    })
}

/// Digest of decoded grayscale pixels; independent of file encoding.
pub fn frame_digest(img: &GrayImage) -> String {
    let mut bytes = Vec::with_capacity(8 + img.as_raw().len());
    bytes.extend_from_slice(&img.width().to_le_bytes());
    bytes.extend_from_slice(&img.height().to_le_bytes());
    bytes.extend_from_slice(img.as_raw());
    crate::util::sha256_hex(bytes)
}

pub fn save_png(img: &GrayImage, path: &Path) -> crate::error::Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| crate::error::Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    crate::util::write_atomic(path, &bytes)
}

pub fn wav_duration_s(path: &Path) -> Result<f64, MediaError> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    Ok(f64::from(reader.duration()) / f64::from(spec.sample_rate))
}

/// Digest of the PCM samples of a WAV file (header excluded).
pub fn wav_sample_digest(path: &Path) -> Result<String, MediaError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let samples = reader
        .samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Ok(pcm_digest(spec.sample_rate, spec.channels, &samples))
}

pub fn pcm_digest(sample_rate: u32, channels: u16, samples: &[i16]) -> String {
    let mut bytes = Vec::with_capacity(6 + samples.len() * 2);
    bytes.extend_from_slice(&sample_rate.to_le_bytes());
    bytes.extend_from_slice(&channels.to_le_bytes());
    for s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    crate::util::sha256_hex(bytes)
}

pub fn wav_sample_count(path: &Path) -> Result<u32, MediaError> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    Ok(reader.duration())
}

fn wav_error(path: &Path, e: hound::Error) -> MediaError {
    match e {
        hound::Error::IoError(source) => MediaError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => MediaError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_primaries() {
        assert_eq!(luma_601(255, 255, 255), 255);
        assert_eq!(luma_601(0, 0, 0), 0);
        assert_eq!(luma_601(255, 0, 0), 76);
        assert_eq!(luma_601(0, 255, 0), 150);
        assert_eq!(luma_601(0, 0, 255), 29);
    }

    #[test]
    fn png_round_trip_preserves_digest() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(9, 7, |x, y| image::Luma([(x * 20 + y * 3) as u8]));
        let path = dir.path().join("a.png");
        save_png(&img, &path).unwrap();
        let back = load_gray(&path).unwrap();
        assert_eq!(frame_digest(&back), frame_digest(&img));
    }

    #[test]
    fn missing_image_is_io_error() {
        assert!(matches!(
            load_gray(Path::new("/no/such/frame.png")),
            Err(MediaError::Io { .. })
        ));
    }
}
