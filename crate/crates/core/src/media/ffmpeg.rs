//! `ffmpeg`/`ffprobe` subprocess backend.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{GrayImage, RgbImage};
use serde::Deserialize;

use super::{rgb_to_luma, MediaError, MediaInfo, MediaToolkit, AUDIO_SAMPLE_RATE};

const VIDEO_EXTENSIONS: &[&str] = &["mp4", "mkv", "webm", "mov", "avi"];

#[derive(Debug, Clone)]
pub struct FfmpegToolkit {
    pub ffmpeg: PathBuf,
    pub ffprobe: PathBuf,
}

impl Default for FfmpegToolkit {
    fn default() -> Self {
        Self {
            ffmpeg: PathBuf::from("ffmpeg"),
            ffprobe: PathBuf::from("ffprobe"),
        }
    }
}

impl FfmpegToolkit {
    pub fn probe_args(video: &Path) -> Vec<OsString> {
        let mut args: Vec<OsString> = ["-v", "error", "-print_format", "json", "-show_format", "-show_streams"]
            .iter()
            .map(OsString::from)
            .collect();
        args.push(video.as_os_str().to_owned());
        args
    }

    pub fn audio_args(video: &Path, out: &Path) -> Vec<OsString> {
        let mut args: Vec<OsString> = vec!["-nostdin".into(), "-y".into(), "-v".into(), "error".into(), "-i".into()];
        args.push(video.as_os_str().to_owned());
        for a in ["-vn", "-ac", "1", "-ar"] {
            args.push(a.into());
        }
        args.push(AUDIO_SAMPLE_RATE.to_string().into());
        for a in ["-c:a", "pcm_s16le", "-f", "wav"] {
            args.push(a.into());
        }
        args.push(out.as_os_str().to_owned());
        args
    }

    pub fn frame_args(video: &Path, t: f64) -> Vec<OsString> {
        let mut args: Vec<OsString> = vec!["-nostdin".into(), "-v".into(), "error".into(), "-ss".into()];
        args.push(format!("{t:.3}").into());
        args.push("-i".into());
        args.push(video.as_os_str().to_owned());
        for a in ["-frames:v", "1", "-f", "rawvideo", "-pix_fmt", "rgb24", "-"] {
            args.push(a.into());
        }
        args
    }

    fn run(&self, tool: &Path, args: &[OsString]) -> Result<Output, MediaError> {
        let output = Command::new(tool).args(args).output().map_err(|e| MediaError::ToolMissing {
            tool: tool.display().to_string(),
            message: e.to_string(),
        })?;
        if !output.status.success() {
            return Err(MediaError::ToolFailed {
                tool: tool.display().to_string(),
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(output)
    }
}

#[derive(Debug, Deserialize)]
struct ProbeOutput {
    #[serde(default)]
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Debug, Deserialize)]
struct ProbeStream {
    codec_type: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
}

/// Parses `ffprobe -print_format json` output.
pub(crate) fn parse_probe(video: &Path, json: &[u8]) -> Result<MediaInfo, MediaError> {
    let decode = |message: String| MediaError::Decode {
        path: video.to_path_buf(),
        message,
    };
    let probe: ProbeOutput = serde_json::from_slice(json).map_err(|e| decode(e.to_string()))?;
    let video_stream = probe
        .streams
        .iter()
        .find(|s| s.codec_type.as_deref() == Some("video"))
        .ok_or_else(|| decode("no video stream".into()))?;
    let duration_s = probe
        .format
        .and_then(|f| f.duration)
        .ok_or_else(|| decode("no duration".into()))?
        .parse::<f64>()
        .map_err(|e| decode(format!("bad duration: {e}")))?;
    Ok(MediaInfo {
        duration_s,
        width: video_stream.width.ok_or_else(|| decode("no width".into()))?,
        height: video_stream.height.ok_or_else(|| decode("no height".into()))?,
        has_audio: probe
            .streams
            .iter()
            .any(|s| s.codec_type.as_deref() == Some("audio")),
    })
}

impl MediaToolkit for FfmpegToolkit {
    fn name(&self) -> &str {
        "ffmpeg"
    }

    fn locate(&self, media_dir: &Path, video_id: &str) -> Option<PathBuf> {
        VIDEO_EXTENSIONS
            .iter()
            .map(|ext| media_dir.join(format!("{video_id}.{ext}")))
            .find(|p| p.is_file())
    }

    fn probe(&self, video: &Path) -> Result<MediaInfo, MediaError> {
        let out = self.run(&self.ffprobe, &Self::probe_args(video))?;
        parse_probe(video, &out.stdout)
    }

    fn extract_audio(&self, video: &Path, out: &Path) -> Result<(), MediaError> {
        if !self.probe(video)?.has_audio {
            return Err(MediaError::NoAudioTrack(video.to_path_buf()));
        }
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent).map_err(|source| MediaError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        self.run(&self.ffmpeg, &Self::audio_args(video, out)).map(|_| ())
    }

    fn frames_at(&self, video: &Path, timestamps: &[f64]) -> Result<Vec<GrayImage>, MediaError> {
        let info = self.probe(video)?;
        let expected = info.width as usize * info.height as usize * 3;
        timestamps
            .iter()
            .map(|&t| {
                let out = self.run(&self.ffmpeg, &Self::frame_args(video, t))?;
                if out.stdout.len() < expected {
                    return Err(MediaError::Decode {
                        path: video.to_path_buf(),
                        message: format!("short frame at {t}s: {} of {expected} bytes", out.stdout.len()),
                    });
                }
                let rgb = RgbImage::from_raw(info.width, info.height, out.stdout[..expected].to_vec())
                    .expect("buffer length checked above");
                Ok(rgb_to_luma(&rgb))
            })
            .collect()
    }

    fn check(&self) -> Result<String, MediaError> {
        let out = self.run(&self.ffmpeg, &["-version".into()])?;
        self.run(&self.ffprobe, &["-version".into()])?;
        Ok(String::from_utf8_lossy(&out.stdout)
            .lines()
            .next()
            .unwrap_or("ffmpeg")
            .to_string())
    }
}
