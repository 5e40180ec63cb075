use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::mllm::{self, build_round2_prompt, parse_affordance, ChatBackend, PixelPoint, TaggedImage};
use crate::sampler::{temporal_window, TemporalWindow};
use crate::scene::TaskQuery;

use super::coarse::{rescale_point, CoarseCandidate};
use super::trace::{Exchange, Stage};
use super::{PipelineConfig, PipelineError, SceneContext};

pub type FramePoints = BTreeMap<usize, Vec<PixelPoint>>;

/// Windows around every valid candidate, in iteration order.
pub fn candidate_windows(
    ctx: &SceneContext,
    candidates: &[CoarseCandidate],
    cfg: &PipelineConfig,
) -> Result<Vec<TemporalWindow>, PipelineError> {
    let timestamps = ctx.scene.timestamps();
    let sampling = cfg.effective_sampling();
    candidates
        .iter()
        .filter(|c| c.valid)
        .filter_map(|c| c.frame_index.map(|f| (c.iteration, f)))
        .map(|(k, f)| {
            let w = if cfg.enable_temporal_window {
                temporal_window(&timestamps, f, &sampling).map_err(|e| PipelineError::Config(e.to_string()))?
            } else {
                TemporalWindow::single(f)
            };
            Ok(w.with_iteration(k))
        })
        .collect()
}

/// Distinct frames to query, each with the name from the earliest window
/// containing it, capped at `max_frames` by uniform subsampling.
pub fn fine_frame_plan(
    windows: &[TemporalWindow],
    candidates: &[CoarseCandidate],
    resolved: &str,
    max_frames: usize,
) -> Vec<(usize, String)> {
    let mut plan: BTreeMap<usize, String> = BTreeMap::new();
    for w in windows {
        let name = candidates
            .iter()
            .find(|c| Some(c.iteration) == w.source_iteration)
            .and_then(|c| c.functional_object.clone())
            .filter(|n| !n.trim().is_empty())
            .unwrap_or_else(|| resolved.to_string());
        for f in w.iter() {
            plan.entry(f).or_insert_with(|| name.clone());
        }
    }
    let all: Vec<(usize, String)> = plan.into_iter().collect();
    if all.len() <= max_frames {
        return all;
    }
    (0..max_frames).map(|i| all[i * all.len() / max_frames].clone()).collect()
}

/// Native-resolution re-localization on every planned frame. Frames whose
/// query fails or yields no point are skipped.
pub fn run_fine(
    ctx: &SceneContext,
    query: &TaskQuery,
    plan: &[(usize, String)],
    cfg: &PipelineConfig,
    chat: &dyn ChatBackend,
    log: &mut Vec<Exchange>,
) -> Result<FramePoints, PipelineError> {
    let scene = ctx.scene.as_ref();
    let results: Vec<(usize, Vec<PixelPoint>, Exchange)> = plan
        .par_iter()
        .map(|(f, name)| {
            let frame = &scene.frames[*f];
            let tagged = TaggedImage::new(*f, Arc::clone(&frame.color));
            let mut ex = Exchange { stage: Stage::Fine, frames: vec![*f], prompt: String::new(), response: None, error: None };
            let req = match build_round2_prompt(&query.text, name, &tagged) {
                Ok(r) => r.with_options(&cfg.chat),
                Err(e) => {
                    ex.error = Some(e.to_string());
                    return (*f, Vec::new(), ex);
                }
            };
            ex.prompt = req.prompt_text();
            let points = match mllm::chat(chat, &req) {
                Ok(text) => {
                    let parsed = parse_affordance(&text, false, frame.dims());
                    ex.response = Some(text);
                    match parsed {
                        Ok(r) => r.points,
                        Err(e) => {
                            ex.error = Some(e.to_string());
                            Vec::new()
                        }
                    }
                }
                Err(e) => {
                    tracing::warn!(frame = f, error = %e, "fine query failed");
                    ex.error = Some(e.to_string());
                    Vec::new()
                }
            };
            (*f, points, ex)
        })
        .collect();

    let mut out = FramePoints::new();
    let mut errors = Vec::new();
    for (f, mut points, ex) in results {
        if let Some(e) = &ex.error {
            errors.push(e.clone());
        }
        log.push(ex);
        points.sort();
        points.dedup();
        if !points.is_empty() {
            out.insert(f, points);
        }
    }
    if out.is_empty() {
        return Err(PipelineError::FineStageEmpty { reasons: errors });
    }
    Ok(out)
}

/// Single-stage variant: the coarse picks themselves, mapped to native pixels.
pub fn coarse_points(ctx: &SceneContext, candidates: &[CoarseCandidate], cfg: &PipelineConfig) -> Result<FramePoints, PipelineError> {
    let coarse_res = cfg.effective_sampling().coarse_resolution;
    let mut out = FramePoints::new();
    for c in candidates.iter().filter(|c| c.valid) {
        if let (Some(f), Some(p)) = (c.frame_index, c.point) {
            let native = ctx.scene.frames[f].dims();
            out.entry(f).or_default().push(rescale_point(p, coarse_res, native));
        }
    }
    for pts in out.values_mut() {
        pts.sort();
        pts.dedup();
    }
    if out.is_empty() {
        return Err(PipelineError::FineStageEmpty { reasons: vec!["no coarse candidate carries a point".into()] });
    }
    Ok(out)
}
