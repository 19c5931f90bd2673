use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{Outcome, Pipeline, Stage, StageSummary, WorkItem, Workdir};
use crate::assembler::{emit, interleave_video, pack, ClipBundle, Conservation, PackConfig, VideoElements};
use crate::clip_stage::{caption_frame_times, cut_clips, merge_segments, visual_filter};
use crate::collection::{
    backend_from_spec, dedup_by_video_id, expand_queries, filter_metadata, load_taxonomy, search_all, MetaDecision,
    SearchResult,
};
use crate::corpus::{
    read_corpus, ClipStatus, CorpusRules, Keyframe, KnowledgePoint, RefinedTranscript, VideoClip, VideoMeta,
};
use crate::error::{Error, Result};
use crate::frame::{dedup_ocr, extract_keyframes, ocr_and_filter, sample_frames, Frame};
use crate::media::save_png;
use crate::metrics::{corpus_stats, insi_sim, ppl_report, DirImageSource};
use crate::services::{ServiceError, Transcription};
use crate::util;
use crate::video_stage::{
    extract_audio, judge_filter, refine_transcript, rule_filter, rule_verdict, transcript_text, AudioOutcome,
    FinalVerdict, RuleResult,
};

fn service_outcome(what: &str, e: ServiceError) -> Outcome {
    if e.is_retryable() {
        Outcome::Pending(format!("{what}: {e}"))
    } else {
        Outcome::Failed(format!("{what}: {e}"))
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("in-memory serialization cannot fail")
}

/// Folds a fallible body into an outcome; errors become failures.
fn attempt(body: impl FnOnce() -> Result<Outcome>) -> Outcome {
    body().unwrap_or_else(|e| match e {
        Error::Service(e) => service_outcome("service", e),
        e => Outcome::Failed(e.to_string()),
    })
}

impl Pipeline {
    /// Pipeline settings named in `keys`, for input hashes.
    fn settings(&self, keys: &[&str]) -> serde_json::Value {
        let all = to_json(&self.config.pipeline);
        keys.iter().map(|k| (k.to_string(), all[*k].clone())).collect()
    }

    fn media_path(&self, video_id: &str) -> Option<PathBuf> {
        self.toolkit.locate(&self.config.inputs.media_dir, video_id)
    }

    fn media_hash(&self, video_id: &str) -> String {
        self.media_path(video_id)
            .and_then(|p| util::file_hash(&p).ok())
            .unwrap_or_else(|| "missing".into())
    }

    fn output_hash(&self, rel: &str) -> String {
        util::file_hash(&self.workdir.path(rel)).unwrap_or_else(|_| "missing".into())
    }

    fn points(&self) -> Result<HashMap<String, KnowledgePoint>> {
        Ok(load_taxonomy(&self.config.inputs.taxonomy)?
            .points()
            .into_iter()
            .map(|p| (p.id(), p))
            .collect())
    }

    /// Keys of `stage` that finished with outputs, in the order given.
    fn passed(&self, stage: Stage, keys: impl IntoIterator<Item = String>) -> Result<Vec<String>> {
        let store = self.workdir.open_manifest(stage)?;
        Ok(keys
            .into_iter()
            .filter(|k| store.get(k).is_some_and(|e| !e.output_keys.is_empty()))
            .collect())
    }

    /// Videos kept by collection, in search order.
    pub fn collected_videos(&self) -> Result<Vec<VideoMeta>> {
        let path = self.workdir.search_results();
        if !path.is_file() {
            return Err(Error::Validation("no search results in the workdir; run the collect stage first".into()));
        }
        let results: Vec<SearchResult> = util::read_jsonl(&path)?;
        let store = self.workdir.open_manifest(Stage::Collect)?;
        Ok(results
            .into_iter()
            .filter(|r| {
                store
                    .get(&result_key(r))
                    .is_some_and(|e| !e.output_keys.is_empty())
            })
            .map(|r| r.meta)
            .collect())
    }

    /// Video ids that passed every stage up to and including `stage`.
    pub fn videos_through(&self, stage: Stage) -> Result<Vec<String>> {
        let mut ids: Vec<String> = self.collected_videos()?.into_iter().map(|m| m.video_id).collect();
        for s in [Stage::Video, Stage::Clip, Stage::Frame] {
            if s > stage {
                break;
            }
            ids = self.passed(s, ids)?;
        }
        Ok(ids)
    }

    pub(super) fn collect_stage(&self) -> Result<StageSummary> {
        let taxonomy = load_taxonomy(&self.config.inputs.taxonomy)?;
        let points: HashMap<String, KnowledgePoint> = taxonomy.points().into_iter().map(|p| (p.id(), p)).collect();
        let queries = expand_queries(&taxonomy);
        let backend = backend_from_spec(&self.config.inputs.search_backend)?;
        let results = search_all(backend.as_ref(), &queries, self.config.pipeline.top_k_search_results)?;
        util::write_jsonl_atomic(&self.workdir.search_results(), &results)?;

        let (kept, _) = dedup_by_video_id(results.clone());
        let kept_keys: std::collections::HashSet<String> = kept.iter().map(result_key).collect();
        let settings = self.settings(&["criteria_pass_threshold", "judges"]);
        let items: Vec<WorkItem<(SearchResult, bool)>> = results
            .into_iter()
            .map(|r| {
                let duplicate = !kept_keys.contains(&result_key(&r));
                WorkItem {
                    key: result_key(&r),
                    hash: util::json_hash(&(&r, duplicate, &settings)),
                    payload: (r, duplicate),
                }
            })
            .collect();

        let mut store = self.workdir.open_manifest(Stage::Collect)?;
        let threshold = self.config.pipeline.criteria_pass_threshold;
        self.runner(Stage::Collect, &mut store).run(&items, |item| {
            attempt(|| {
                let (result, duplicate) = &item.payload;
                let meta = &result.meta;
                if *duplicate {
                    return Ok(Outcome::Dropped {
                        reason: "duplicate_video_id".into(),
                        detail: Some(json!({ "video_id": meta.video_id })),
                    });
                }
                meta.check().map_err(Error::Validation)?;
                let point = points
                    .get(&result.point_id)
                    .ok_or_else(|| Error::Validation(format!("unknown point {}", result.point_id)))?;
                Ok(match filter_metadata(meta, point, &self.services.judges, threshold)? {
                    MetaDecision::Keep => {
                        let rel = Workdir::video_meta_rel(&meta.video_id);
                        util::write_json_atomic(&self.workdir.path(&rel), meta)?;
                        Outcome::done(vec![rel])
                    }
                    MetaDecision::Drop(reason) => Outcome::Dropped {
                        reason: reason.as_str().into(),
                        detail: Some(json!({ "video_id": meta.video_id })),
                    },
                    MetaDecision::Pending(why) => Outcome::Pending(why),
                })
            })
        })
    }

    pub(super) fn video_stage(&self) -> Result<StageSummary> {
        let videos = self.collected_videos()?;
        let points = self.points()?;
        let settings = self.settings(&[
            "min_duration_s",
            "min_asr_tokens",
            "accepted_languages",
            "criteria_pass_threshold",
            "judges",
        ]);
        let items: Vec<WorkItem<VideoMeta>> = videos
            .into_iter()
            .map(|meta| WorkItem {
                key: meta.video_id.clone(),
                hash: util::json_hash(&(&meta, self.media_hash(&meta.video_id), &settings)),
                payload: meta,
            })
            .collect();
        let mut store = self.workdir.open_manifest(Stage::Video)?;
        self.runner(Stage::Video, &mut store)
            .run(&items, |item| attempt(|| self.process_video(&item.payload, &points)))
    }

    fn process_video(&self, meta: &VideoMeta, points: &HashMap<String, KnowledgePoint>) -> Result<Outcome> {
        let id = &meta.video_id;
        let Some(media) = self.media_path(id) else {
            return Ok(Outcome::Failed(format!("no media file for {id}")));
        };
        let dir = self.workdir.video_dir(id);
        util::ensure_dir(&dir)?;
        let audio = dir.join("audio.wav");
        let transcript = match extract_audio(self.toolkit.as_ref(), &media, &audio)? {
            AudioOutcome::Silent => Transcription::empty(),
            AudioOutcome::Extracted => match self.services.recognizer.transcribe(&audio) {
                Ok(t) => t,
                Err(e) => return Ok(service_outcome("transcribe", e)),
            },
        };
        util::write_json_atomic(&dir.join("transcript.json"), &transcript)?;

        let cfg = &self.config.pipeline;
        if let RuleResult::Fail(failure) = rule_filter(meta, &transcript, cfg, self.services.tokenizer.as_ref()) {
            let verdict = rule_verdict(id, failure);
            util::write_json_atomic(&dir.join("verdict.json"), &verdict)?;
            return Ok(Outcome::dropped(failure.as_str()));
        }
        let point = points
            .get(&meta.source_point)
            .ok_or_else(|| Error::Validation(format!("video {id} names unknown point {}", meta.source_point)))?;
        let text = transcript_text(&transcript.segments);
        let verdict = judge_filter(id, &text, point, &self.services.judges, cfg.criteria_pass_threshold);
        util::write_json_atomic(&dir.join("verdict.json"), &verdict)?;
        match &verdict.final_verdict {
            FinalVerdict::Pending(why) => return Ok(Outcome::Pending(why.clone())),
            FinalVerdict::Dropped(reason) => {
                return Ok(Outcome::Dropped {
                    reason: reason.clone(),
                    detail: Some(json!({ "judges": to_json(&verdict.judge_results) })),
                })
            }
            FinalVerdict::Kept => {}
        }
        let refined = refine_transcript(
            id,
            &transcript,
            self.services.refiner.as_ref(),
            self.services.perplexity.as_deref(),
        );
        let rel = Workdir::refined_rel(id);
        util::write_json_atomic(&self.workdir.path(&rel), &refined)?;
        Ok(Outcome::Done {
            outputs: vec![rel],
            detail: Some(json!({
                "ppl_raw": refined.ppl_raw,
                "ppl_refined": refined.ppl_refined,
                "unrefined": refined.unrefined,
            })),
        })
    }

    pub(super) fn clip_stage(&self) -> Result<StageSummary> {
        let ids = self.videos_through(Stage::Video)?;
        let settings = self.settings(&[
            "use_refined_asr",
            "clip_target_s",
            "clip_min_s",
            "clip_max_s",
            "caption_asr_sim_threshold",
            "caption_max_frames",
        ]);
        let items: Vec<WorkItem<String>> = ids
            .into_iter()
            .map(|id| WorkItem {
                key: id.clone(),
                hash: util::json_hash(&(
                    self.output_hash(&Workdir::refined_rel(&id)),
                    self.media_hash(&id),
                    &settings,
                )),
                payload: id,
            })
            .collect();
        let mut store = self.workdir.open_manifest(Stage::Clip)?;
        self.runner(Stage::Clip, &mut store)
            .run(&items, |item| attempt(|| self.process_clips(&item.payload)))
    }

    fn process_clips(&self, id: &str) -> Result<Outcome> {
        let cfg = &self.config.pipeline;
        let Some(media) = self.media_path(id) else {
            return Ok(Outcome::Failed(format!("no media file for {id}")));
        };
        let refined: RefinedTranscript = util::read_json(&self.workdir.path(&Workdir::refined_rel(id)))?;
        let segments = if cfg.use_refined_asr {
            &refined.refined_paragraphs
        } else {
            &refined.raw_segments
        };
        let paragraphs = merge_segments(segments, cfg)?;
        let duration = self.toolkit.probe(&media)?.duration_s;
        let dir = self.workdir.clip_dir(id);
        util::ensure_dir(&dir)?;
        let mut clips = Vec::new();
        for clip in cut_clips(id, &paragraphs, duration)? {
            let times = caption_frame_times(clip.start_s, clip.end_s, cfg.caption_max_frames);
            let images = match self.toolkit.frames_at(&media, &times) {
                Ok(images) => images,
                Err(e) => {
                    tracing::warn!(clip_id = %clip.clip_id, error = %e, "caption frames unavailable");
                    clips.push(clip);
                    continue;
                }
            };
            let mut refs = Vec::with_capacity(images.len());
            for (k, img) in images.iter().enumerate() {
                let path = dir.join(format!("{}_{k}.png", clip.clip_id));
                save_png(img, &path)?;
                refs.push(path);
            }
            clips.push(visual_filter(
                clip,
                &refs,
                self.services.captioner.as_ref(),
                self.services.text_embedder.as_ref(),
                cfg.caption_asr_sim_threshold,
            ));
        }
        let pending: Vec<&str> = clips
            .iter()
            .filter(|c| c.status == ClipStatus::Pending)
            .map(|c| c.clip_id.as_str())
            .collect();
        if !pending.is_empty() {
            return Ok(Outcome::Pending(format!("clips pending: {}", pending.join(", "))));
        }
        let rel = Workdir::clips_rel(id);
        util::write_json_atomic(&self.workdir.path(&rel), &clips)?;
        let dropped: Vec<serde_json::Value> = clips
            .iter()
            .filter(|c| c.status == ClipStatus::DroppedVisual)
            .map(|c| {
                json!({
                    "clip_id": c.clip_id,
                    "similarity": c.caption_asr_similarity,
                    "threshold": cfg.caption_asr_sim_threshold,
                })
            })
            .collect();
        Ok(Outcome::Done {
            outputs: vec![rel],
            detail: Some(json!({ "n_clips": clips.len(), "dropped_visual": dropped })),
        })
    }

    pub(super) fn frame_stage(&self) -> Result<StageSummary> {
        let ids = self.videos_through(Stage::Clip)?;
        let settings = self.settings(&[
            "frame_sample_fps",
            "keyframe_extractor",
            "ssim_threshold_T",
            "pixel_threshold",
            "semantic_cos_threshold",
            "carry_reference_across_clips",
            "ocr_enabled",
            "keyframe_score_threshold",
            "ocr_dedup_jaccard",
        ]);
        let items: Vec<WorkItem<String>> = ids
            .into_iter()
            .map(|id| WorkItem {
                key: id.clone(),
                hash: util::json_hash(&(
                    self.output_hash(&Workdir::clips_rel(&id)),
                    self.media_hash(&id),
                    &settings,
                )),
                payload: id,
            })
            .collect();
        let mut store = self.workdir.open_manifest(Stage::Frame)?;
        self.runner(Stage::Frame, &mut store)
            .run(&items, |item| attempt(|| self.process_frames(&item.payload)))
    }

    fn process_frames(&self, id: &str) -> Result<Outcome> {
        let cfg = &self.config.pipeline;
        let Some(media) = self.media_path(id) else {
            return Ok(Outcome::Failed(format!("no media file for {id}")));
        };
        let clips: Vec<VideoClip> = util::read_json(&self.workdir.path(&Workdir::clips_rel(id)))?;
        let mut bundles = Vec::with_capacity(clips.len());
        let mut carried: Option<Frame> = None;
        let mut low_score = Vec::new();
        let mut flagged = Vec::new();
        let mut n_extracted = 0;
        for clip in clips {
            if clip.status != ClipStatus::Kept {
                bundles.push(ClipBundle {
                    clip,
                    keyframes: Vec::new(),
                });
                continue;
            }
            let frames = sample_frames(self.toolkit.as_ref(), &media, clip.start_s, clip.end_s, cfg.frame_sample_fps)?;
            let reference = carried.as_ref().filter(|_| cfg.carry_reference_across_clips);
            let keys = extract_keyframes(&frames, cfg, self.services.frame_embedder.as_ref(), reference)?;
            n_extracted += keys.len();
            let mut keyframes = Vec::with_capacity(keys.len());
            for &k in &keys {
                let frame = &frames[k];
                let image_ref = Workdir::keyframe_rel(id, &clip.clip_id, frame.index);
                save_png(&frame.pixels, &self.workdir.path(&image_ref))?;
                keyframes.push(Keyframe {
                    frame_id: format!("{}/{}", clip.clip_id, frame.index),
                    clip_id: clip.clip_id.clone(),
                    timestamp_s: frame.timestamp_s,
                    image_ref,
                    score: None,
                    ocr_text: None,
                    ocr_kept: false,
                });
            }
            if let Some(&last) = keys.last() {
                carried = Some(frames[last].clone());
            }
            if cfg.ocr_enabled {
                let outcome = ocr_and_filter(
                    keyframes,
                    |r: &str| self.workdir.path(r),
                    |p: &Path| self.services.ocr_frame(p),
                    cfg.keyframe_score_threshold,
                );
                low_score.extend(outcome.dropped.into_iter().map(|(f, s)| json!({ "frame_id": f, "score": s })));
                flagged.extend(outcome.flagged);
                keyframes = outcome.kept;
            }
            bundles.push(ClipBundle { clip, keyframes });
        }
        if cfg.ocr_enabled {
            let mut all: Vec<Keyframe> = bundles.iter_mut().flat_map(|b| b.keyframes.drain(..)).collect();
            dedup_ocr(&mut all, cfg.ocr_dedup_jaccard);
            let mut rest = all.into_iter();
            for b in &mut bundles {
                let n = rest.as_slice().iter().take_while(|k| k.clip_id == b.clip.clip_id).count();
                b.keyframes.extend(rest.by_ref().take(n));
            }
        }
        let rel = Workdir::keyframes_rel(id);
        util::write_json_atomic(&self.workdir.path(&rel), &bundles)?;
        let n_kept: usize = bundles.iter().map(|b| b.keyframes.len()).sum();
        Ok(Outcome::Done {
            outputs: vec![rel],
            detail: Some(json!({
                "n_extracted": n_extracted,
                "n_kept": n_kept,
                "low_score": low_score,
                "ocr_flagged": flagged,
            })),
        })
    }

    pub fn bundles(&self, video_id: &str) -> Result<Vec<ClipBundle>> {
        util::read_json(&self.workdir.path(&Workdir::keyframes_rel(video_id)))
    }

    pub(super) fn assemble_stage(&self) -> Result<StageSummary> {
        let ids = self.videos_through(Stage::Frame)?;
        let inputs: Vec<(String, String)> = ids
            .iter()
            .map(|id| (id.clone(), self.output_hash(&Workdir::keyframes_rel(id))))
            .collect();
        let settings = self.settings(&["packing_strategy", "token_budget", "max_images_per_sample", "eov_token"]);
        let items = vec![WorkItem {
            key: "corpus".to_string(),
            hash: util::json_hash(&(&inputs, &settings)),
            payload: ids,
        }];
        let mut store = self.workdir.open_manifest(Stage::Assemble)?;
        self.runner(Stage::Assemble, &mut store)
            .run(&items, |item| attempt(|| self.assemble(&item.payload)))
    }

    fn assemble(&self, ids: &[String]) -> Result<Outcome> {
        let cfg = &self.config.pipeline;
        let tokenizer = self.services.tokenizer.as_ref();
        let mut videos = Vec::with_capacity(ids.len());
        for id in ids {
            videos.push(VideoElements {
                video_id: id.clone(),
                elements: interleave_video(&self.bundles(id)?)?,
            });
        }
        let pack_cfg = PackConfig {
            strategy: cfg.packing_strategy,
            token_budget: cfg.token_budget,
            max_images: cfg.max_images_per_sample,
            eov_token: &cfg.eov_token,
        };
        let result = pack(&videos, pack_cfg, tokenizer);
        let conservation = Conservation::of(&videos, &result, tokenizer);
        if !conservation.holds() {
            return Err(Error::Validation(format!("packing lost content: {conservation:?}")));
        }
        let rules = CorpusRules {
            eov_token: &cfg.eov_token,
            tokenizer,
        };
        let stats = emit(&result.samples, &self.workdir.corpus(), &rules)?;
        util::write_json_atomic(&self.workdir.path(Workdir::EXCLUSIONS_REL), &result.excluded)?;
        Ok(Outcome::Done {
            outputs: vec![Workdir::CORPUS_REL.into(), Workdir::EXCLUSIONS_REL.into()],
            detail: Some(json!({
                "n_videos": videos.len(),
                "stats": to_json(&stats),
                "conservation": to_json(&conservation),
                "n_excluded": result.excluded.len(),
            })),
        })
    }

    pub(super) fn metrics_stage(&self) -> Result<StageSummary> {
        let corpus = self.workdir.corpus();
        if !corpus.is_file() {
            return Err(Error::Validation("no corpus in the workdir; run the assemble stage first".into()));
        }
        let settings = self.settings(&["insi_sim_buckets"]);
        let items = vec![WorkItem {
            key: "report".to_string(),
            hash: util::json_hash(&(util::file_hash(&corpus)?, &settings)),
            payload: (),
        }];
        let mut store = self.workdir.open_manifest(Stage::Metrics)?;
        self.runner(Stage::Metrics, &mut store).run(&items, |_| attempt(|| self.metrics()))
    }

    fn metrics(&self) -> Result<Outcome> {
        let samples = read_corpus(&self.workdir.corpus())?;
        let source = DirImageSource {
            root: self.workdir.root().to_path_buf(),
        };
        let insi = insi_sim(
            &samples,
            &source,
            self.services.frame_embedder.as_ref(),
            &self.config.pipeline.insi_sim_buckets,
        )?;
        let ppl = self.services.perplexity.as_deref().map(|p| ppl_report(&samples, p));
        let report = json!({
            "stats": to_json(&corpus_stats(&samples)),
            "insi_sim": to_json(&insi),
            "ppl": ppl.map(|p| to_json(&p)),
        });
        util::write_json_atomic(&self.workdir.path(Workdir::REPORT_REL), &report)?;
        util::write_atomic(&self.workdir.path(Workdir::INSI_CSV_REL), insi.to_csv().as_bytes())?;
        Ok(Outcome::done(vec![Workdir::REPORT_REL.into(), Workdir::INSI_CSV_REL.into()]))
    }
}

pub fn result_key(r: &SearchResult) -> String {
    format!("{}#{}", r.point_id, r.rank)
}
