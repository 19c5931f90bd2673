//! Self-contained demo project: synthetic slide videos, scripted service
//! answers, a two-point taxonomy, canned search results and a run config.
//!
//! The tables are derived from the media itself (audio and frame digests),
//! so the mock run is fully determined by what this module writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::clip_stage::{caption_frame_times, merge_segments};
use crate::collection::{Course, SubCourse, Subject, Taxonomy};
use crate::corpus::{AsrSegment, PipelineConfig, VideoMeta};
use crate::error::Result;
use crate::frame::sample_times;
use crate::media::{frame_digest, pcm_digest, Occlusion, Scene, SceneKind, SlideVideo, AUDIO_SAMPLE_RATE, SLIDE_VIDEO_EXT};
use crate::services::mock::{strip_fillers, ScoreEntry};
use crate::services::{FixtureTables, OcrResult, Transcription};
use crate::util;

pub const SUBJECT: &str = "Mathematics";
pub const COURSE: &str = "Elementary Mathematics";
pub const SUB_COURSE: &str = "Plane Geometry";
pub const AREA_POINT: &str = "area of a triangle";
pub const PYTHAGORAS_POINT: &str = "the Pythagorean theorem";

/// The 60 s lecture whose clips 2 and 3 show only the speaker.
pub const MAIN_VIDEO: &str = "tri_area";

/// Paths of a written demo project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoLayout {
    pub root: PathBuf,
    pub config: PathBuf,
    pub media_dir: PathBuf,
    pub fixtures: PathBuf,
}

struct DemoVideo {
    meta: VideoMeta,
    media: SlideVideo,
    segments: Vec<AsrSegment>,
    language: &'static str,
    /// Slide text per scene index, one entry per line.
    slide_lines: BTreeMap<usize, Vec<&'static str>>,
}

fn meta(video_id: &str, title: &str, description: &str, duration_s: f64) -> VideoMeta {
    VideoMeta {
        video_id: video_id.into(),
        title: title.into(),
        description: description.into(),
        comments: Vec::new(),
        duration_s,
        language: "en".into(),
        source_point: String::new(),
    }
}

fn segments(script: &[(f64, f64, &str)]) -> Vec<AsrSegment> {
    script.iter().map(|&(s, e, t)| AsrSegment::new(s, e, t)).collect()
}

fn slide(start_s: f64, end_s: f64, seed: u64, lines: u32, reveal_steps: u32) -> Scene {
    Scene {
        start_s,
        end_s,
        kind: SceneKind::Slide,
        seed,
        lines,
        reveal_steps,
        occlusions: Vec::new(),
    }
}

fn speaker(start_s: f64, end_s: f64, seed: u64) -> Scene {
    Scene {
        start_s,
        end_s,
        kind: SceneKind::Speaker,
        seed,
        lines: 0,
        reveal_steps: 1,
        occlusions: Vec::new(),
    }
}

fn deck(duration_s: f64, audio_seed: u64, noise: u8, scenes: Vec<Scene>) -> SlideVideo {
    SlideVideo {
        duration_s,
        width: 64,
        height: 48,
        has_audio: true,
        audio_seed,
        noise,
        scenes,
    }
}

fn main_video() -> DemoVideo {
    let mut last = slide(45.0, 60.0, 14, 5, 2);
    last.occlusions.push(Occlusion {
        start_s: 52.0,
        end_s: 54.0,
    });
    DemoVideo {
        meta: meta(
            MAIN_VIDEO,
            "Area of a triangle | plane geometry basics",
            "Why the area of a triangle is half of base times height.",
            60.0,
        ),
        media: deck(
            60.0,
            11,
            2,
            vec![slide(0.0, 15.0, 11, 4, 3), speaker(15.0, 30.0, 12), speaker(30.0, 45.0, 13), last],
        ),
        segments: segments(&[
            (0.0, 5.0, "um so today we study the area of a triangle in plane geometry"),
            (5.0, 10.0, "a triangle has a base and a height uh measured at a right angle"),
            (10.0, 15.0, "the area is one half times the base times the the height"),
            (15.0, 22.0, "um let me tell you why this formula works for every triangle"),
            (22.0, 30.0, "two copies of one triangle form a parallelogram with the same base"),
            (30.0, 38.0, "the parallelogram has area base times height so uh each triangle gets half"),
            (38.0, 45.0, "the argument works for acute and obtuse triangles alike"),
            (45.0, 52.0, "now an example with base six and height four"),
            (52.0, 60.0, "the area is one half of six times four um which is twelve square units"),
        ]),
        language: "en",
        slide_lines: BTreeMap::from([
            (0, vec!["Area of a triangle", "base b and height h", "A = b h / 2", "height is perpendicular to base"]),
            (3, vec!["Example", "b = 6", "h = 4", "A = 6 x 4 / 2", "A = 12 square units"]),
        ]),
    }
}

fn pythagoras_video() -> DemoVideo {
    DemoVideo {
        meta: meta(
            "pythagoras",
            "The Pythagorean theorem in plane geometry",
            "A short proof of the Pythagorean theorem with squares on each side.",
            30.0,
        ),
        media: deck(30.0, 21, 2, vec![slide(0.0, 15.0, 21, 3, 3), slide(15.0, 30.0, 22, 4, 2)]),
        segments: segments(&[
            (0.0, 8.0, "the pythagorean theorem relates the three sides of a right triangle in plane geometry"),
            (8.0, 15.0, "uh the square on the hypotenuse equals the sum of the squares on the legs"),
            (15.0, 23.0, "for legs three and four the hypotenuse is five since nine plus sixteen is twenty five"),
            (23.0, 30.0, "um this theorem is the base of distance in the coordinate plane"),
        ]),
        language: "en",
        slide_lines: BTreeMap::from([
            (0, vec!["Pythagorean theorem", "a^2 + b^2 = c^2", "c is the hypotenuse"]),
            (1, vec!["Example", "a = 3, b = 4", "9 + 16 = 25", "c = 5"]),
        ]),
    }
}

fn simple_video(id: &str, title: &str, duration_s: f64, audio_seed: u64, script: &[(f64, f64, &str)], language: &'static str) -> DemoVideo {
    DemoVideo {
        meta: meta(id, title, "Plane geometry lesson about the triangle area.", duration_s),
        media: deck(duration_s, audio_seed, 0, vec![slide(0.0, duration_s, audio_seed, 3, 1)]),
        segments: segments(script),
        language,
        slide_lines: BTreeMap::new(),
    }
}

fn demo_videos() -> Vec<DemoVideo> {
    let filler = "um like yeah okay basically right um like yeah so okay right basically um yeah like okay right so basically um";
    let mut silent = simple_video("silent", "Area of a triangle in plane geometry without sound", 20.0, 41, &[], "en");
    silent.media.has_audio = false;
    vec![
        main_video(),
        pythagoras_video(),
        simple_video(
            "short",
            "Triangle area in eight seconds | plane geometry",
            8.0,
            31,
            &[(0.0, 8.0, "the area of a triangle is half the base times the height of the triangle in plane geometry with base and height measured carefully")],
            "en",
        ),
        simple_video(
            "filler",
            "Triangle area in plane geometry, a chat",
            24.0,
            32,
            &[(0.0, 12.0, filler), (12.0, 24.0, filler)],
            "en",
        ),
        simple_video(
            "french",
            "Area of a triangle in plane geometry, French lesson",
            24.0,
            33,
            &[
                (0.0, 12.0, "l'aire d'un triangle est la moitié de la base fois la hauteur en géométrie plane"),
                (12.0, 24.0, "prenons une base de six et une hauteur de quatre alors l'aire vaut douze"),
            ],
            "fr",
        ),
        silent,
    ]
}

/// A cooking video the metadata review rejects.
fn cooking_meta() -> VideoMeta {
    meta("cooking", "Easy pasta dinner", "Boil water, add salt, cook noodles for ten minutes.", 300.0)
}

fn ocr_for(video: &DemoVideo, t: f64) -> OcrResult {
    let media = &video.media;
    let Some(idx) = media.scenes.iter().position(|s| s.start_s <= t && t < s.end_s) else {
        return OcrResult {
            text: String::new(),
            informativeness: 1,
        };
    };
    let scene = &media.scenes[idx];
    if SlideVideo::is_occluded(scene, t) {
        return OcrResult {
            text: String::new(),
            informativeness: 1,
        };
    }
    match (scene.kind, video.slide_lines.get(&idx)) {
        (SceneKind::Slide, Some(lines)) => {
            let steps = scene.reveal_steps.max(1) as usize;
            let step = SlideVideo::reveal_step(scene, t) as usize;
            let visible = (lines.len() * (step + 1)).div_ceil(steps);
            OcrResult {
                text: lines[..visible.min(lines.len())].join("\n"),
                informativeness: 5,
            }
        }
        (SceneKind::Slide, None) => OcrResult {
            text: "lecture notes".into(),
            informativeness: 3,
        },
        _ => OcrResult {
            text: String::new(),
            informativeness: 2,
        },
    }
}

fn caption_for(video: &DemoVideo, start_s: f64, end_s: f64, asr: &str) -> String {
    let mid = (start_s + end_s) / 2.0;
    match video.media.scene_at(mid).map(|s| s.kind) {
        Some(SceneKind::Slide) => format!("a lecture slide while the teacher explains: {}", strip_fillers(asr)),
        _ => "presenter speaking toward camera, studio backdrop, no visuals".to_string(),
    }
}

fn taxonomy() -> Taxonomy {
    Taxonomy {
        subjects: vec![Subject {
            name: SUBJECT.into(),
            courses: vec![Course {
                name: COURSE.into(),
                sub_courses: vec![SubCourse {
                    name: SUB_COURSE.into(),
                    points: vec![AREA_POINT.into(), PYTHAGORAS_POINT.into()],
                }],
            }],
        }],
    }
}

/// Settings the demo runs with; small budgets so packing splits samples.
pub fn demo_pipeline_config() -> PipelineConfig {
    PipelineConfig {
        token_budget: 96,
        max_images_per_sample: 6,
        ..PipelineConfig::default()
    }
}

pub const DEMO_CONFIG_TOML: &str = r#"[inputs]
taxonomy = "taxonomy.json"
search_backend = "fixture:search"
media_dir = "media"

[services]
mode = "mock"
fixtures = "fixtures"

[pipeline]
token_budget = 96
max_images_per_sample = 6

[run]
chunk_size = 4
"#;

fn tables(videos: &[DemoVideo], pipeline: &PipelineConfig) -> Result<FixtureTables> {
    let mut t = FixtureTables::default();
    for v in videos {
        if !v.media.has_audio {
            continue;
        }
        let digest = pcm_digest(AUDIO_SAMPLE_RATE, 1, &v.media.audio_samples());
        t.transcripts.insert(
            digest,
            Transcription {
                segments: v.segments.clone(),
                language: v.language.into(),
            },
        );
        if v.segments.is_empty() {
            continue;
        }
        let refined: Vec<AsrSegment> = v
            .segments
            .iter()
            .map(|s| AsrSegment::new(s.start_s, s.end_s, strip_fillers(&s.text)))
            .collect();
        for p in merge_segments(&refined, pipeline)? {
            let times = caption_frame_times(p.start_s, p.end_s, pipeline.caption_max_frames);
            let digests: Vec<String> = times.iter().map(|&ts| frame_digest(&v.media.render(ts))).collect();
            t.captions
                .insert(FixtureTables::caption_key(&digests), caption_for(v, p.start_s, p.end_s, &p.text));
            for ts in sample_times(p.start_s, p.end_s, pipeline.frame_sample_fps)? {
                t.ocr.insert(frame_digest(&v.media.render(ts)), ocr_for(v, ts));
            }
        }
    }
    // One judge rejects the Pythagoras transcript; the other keeps it.
    let pyth = videos.iter().find(|v| v.meta.video_id == "pythagoras").expect("demo video");
    let text = crate::video_stage::transcript_text(&pyth.segments);
    t.scores.insert(
        format!("judge-a:{}", FixtureTables::score_key(&text)),
        ScoreEntry {
            relevance: 2,
            knowledge_density: 4,
            transcription_quality: 4,
            content_flag: None,
        },
    );
    Ok(t)
}

/// Writes the demo project under `root`.
pub fn write_demo(root: &Path) -> Result<DemoLayout> {
    let layout = DemoLayout {
        root: root.to_path_buf(),
        config: root.join("config.toml"),
        media_dir: root.join("media"),
        fixtures: root.join("fixtures"),
    };
    let videos = demo_videos();
    for v in &videos {
        let path = layout.media_dir.join(format!("{}.{SLIDE_VIDEO_EXT}", v.meta.video_id));
        util::write_json_atomic(&path, &v.media)?;
    }
    tables(&videos, &demo_pipeline_config())?.save(&layout.fixtures)?;
    util::write_json_atomic(&root.join("taxonomy.json"), &taxonomy())?;

    let by_id = |id: &str| videos.iter().find(|v| v.meta.video_id == id).expect("demo video").meta.clone();
    let mut search: BTreeMap<String, Vec<VideoMeta>> = BTreeMap::new();
    search.insert(
        format!("{SUB_COURSE}: {AREA_POINT}"),
        vec![by_id(MAIN_VIDEO), cooking_meta(), by_id("short"), by_id("filler"), by_id("silent")],
    );
    search.insert(
        format!("{SUB_COURSE}: {PYTHAGORAS_POINT}"),
        vec![by_id("pythagoras"), by_id(MAIN_VIDEO), by_id("french")],
    );
    util::write_json_atomic(&root.join("search/search.json"), &search)?;
    util::write_atomic(&layout.config, DEMO_CONFIG_TOML.as_bytes())?;
    Ok(layout)
}

/// Slide deck with per-pixel noise and stepwise reveals, for comparing
/// keyframe extractors.
pub fn noisy_slide_deck(seed: u64) -> SlideVideo {
    let scenes = (0..4)
        .map(|k| {
            let start = k as f64 * 8.0;
            slide(start, start + 8.0, seed * 10 + k, 3 + (k % 3) as u32, 2 + (k % 2) as u32)
        })
        .collect();
    deck(32.0, seed, 2, scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn main_video_merges_into_four_clips() {
        let v = main_video();
        let p = merge_segments(&v.segments, &PipelineConfig::default()).unwrap();
        let spans: Vec<(f64, f64)> = p.iter().map(|s| (s.start_s, s.end_s)).collect();
        assert_eq!(spans, [(0.0, 15.0), (15.0, 30.0), (30.0, 45.0), (45.0, 60.0)]);
    }

    #[test]
    fn demo_writes_loadable_project() {
        let dir = tempfile::tempdir().unwrap();
        let layout = write_demo(dir.path()).unwrap();
        let cfg = crate::pipeline::RunConfig::load(&layout.config).unwrap();
        assert_eq!(cfg.pipeline, demo_pipeline_config());
        let t = FixtureTables::load(&layout.fixtures).unwrap();
        assert_eq!(t.transcripts.len(), 5);
        // the static single-slide videos repeat their caption frames
        assert_eq!(t.captions.len(), 4 + 2 + 1 + 1 + 1);
    }
}
