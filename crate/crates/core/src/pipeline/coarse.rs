use std::collections::HashMap;
use std::sync::Arc;

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::mllm::{self, build_round1_prompt, parse_affordance, ChatBackend, PixelPoint, TaggedImage};
use crate::sampler::coarse_schedule;
use crate::scene::TaskQuery;

use super::trace::{Exchange, Stage};
use super::{PipelineConfig, PipelineError, SceneContext};

/// Outcome of one coarse iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseCandidate {
    /// 1-based iteration number.
    pub iteration: usize,
    pub functional_object: Option<String>,
    pub frame_index: Option<usize>,
    /// First parsed point, in coarse-resolution pixels.
    pub point: Option<PixelPoint>,
    /// A frame index was parsed and lies inside the video.
    pub valid: bool,
    pub error: Option<String>,
}

/// Resizes with a smoothing filter when shrinking and pixel replication when
/// growing. Replication picks the source pixel [`rescale_point`] maps to.
pub fn resize_frame(img: &RgbImage, (w, h): (u32, u32)) -> RgbImage {
    if img.dimensions() == (w, h) {
        return img.clone();
    }
    if w < img.width() || h < img.height() {
        return imageops::resize(img, w, h, FilterType::Triangle);
    }
    let (sw, sh) = img.dimensions();
    let xs: Vec<usize> = (0..w).map(|x| rescale_point(PixelPoint::new(x, 0), (w, h), (sw, sh)).x as usize).collect();
    let src = img.as_raw();
    let mut out = Vec::with_capacity(w as usize * h as usize * 3);
    for y in 0..h {
        let sy = rescale_point(PixelPoint::new(0, y), (w, h), (sw, sh)).y as usize;
        let row = &src[sy * sw as usize * 3..(sy + 1) * sw as usize * 3];
        for &sx in &xs {
            out.extend_from_slice(&row[sx * 3..sx * 3 + 3]);
        }
    }
    RgbImage::from_raw(w, h, out).expect("buffer sized to the image")
}

/// Maps a pixel of a `from`-sized image onto the matching pixel of a `to`-sized one.
pub fn rescale_point(p: PixelPoint, from: (u32, u32), to: (u32, u32)) -> PixelPoint {
    let axis = |v: u32, a: u32, b: u32| {
        let s = ((v as f64 + 0.5) * b as f64 / a as f64).floor() as u32;
        s.min(b.saturating_sub(1))
    };
    PixelPoint::new(axis(p.x, from.0, to.0), axis(p.y, from.1, to.1))
}

/// Coarse-resolution copies of frames, shared across the queries of a scene.
#[derive(Debug, Default)]
pub struct CoarseCache {
    resolution: (u32, u32),
    frames: std::sync::Mutex<HashMap<usize, Arc<RgbImage>>>,
}

impl CoarseCache {
    pub fn new(resolution: (u32, u32)) -> Self {
        Self { resolution, frames: Default::default() }
    }

    pub fn get(&self, index: usize, native: &RgbImage, resolution: (u32, u32)) -> Arc<RgbImage> {
        if resolution != self.resolution {
            return Arc::new(resize_frame(native, resolution));
        }
        if let Some(img) = self.frames.lock().expect("coarse cache lock").get(&index) {
            return Arc::clone(img);
        }
        let img = Arc::new(resize_frame(native, resolution));
        self.frames.lock().expect("coarse cache lock").entry(index).or_insert(img).clone()
    }
}

/// Runs the coarse iterations sequentially and fails when none is valid.
pub fn run_coarse(
    ctx: &SceneContext,
    query: &TaskQuery,
    cfg: &PipelineConfig,
    chat: &dyn ChatBackend,
    log: &mut Vec<Exchange>,
) -> Result<Vec<CoarseCandidate>, PipelineError> {
    let out = coarse_iterations(ctx, query, cfg, chat, log)?;
    require_valid(&out)?;
    Ok(out)
}

pub fn require_valid(candidates: &[CoarseCandidate]) -> Result<(), PipelineError> {
    if candidates.iter().any(|c| c.valid) {
        return Ok(());
    }
    let reasons = candidates
        .iter()
        .map(|c| format!("iteration {}: {}", c.iteration, c.error.as_deref().unwrap_or("no frame index")))
        .collect();
    Err(PipelineError::AllIterationsInvalid { reasons })
}

/// Runs the coarse iterations sequentially and classifies each answer.
pub fn coarse_iterations(
    ctx: &SceneContext,
    query: &TaskQuery,
    cfg: &PipelineConfig,
    chat: &dyn ChatBackend,
    log: &mut Vec<Exchange>,
) -> Result<Vec<CoarseCandidate>, PipelineError> {
    let scene = ctx.scene.as_ref();
    let sampling = cfg.effective_sampling();
    let res = sampling.coarse_resolution;
    let mut out = Vec::with_capacity(sampling.iterations);
    for k in 1..=sampling.iterations {
        let schedule = coarse_schedule(scene.frames.len(), &sampling, k).map_err(|e| PipelineError::Config(e.to_string()))?;
        let tagged: Vec<TaggedImage> = schedule
            .indices
            .iter()
            .map(|&i| TaggedImage::new(i, ctx.coarse.get(i, &scene.frames[i].color, res)))
            .collect();
        let req = build_round1_prompt(&query.text, &tagged)
            .map_err(|e| PipelineError::Config(e.to_string()))?
            .with_options(&cfg.chat);
        let mut frames = schedule.indices.clone();
        frames.dedup();
        let reply = mllm::chat(chat, &req);
        log.push(Exchange {
            stage: Stage::Coarse,
            frames,
            prompt: req.prompt_text(),
            response: reply.as_ref().ok().cloned(),
            error: reply.as_ref().err().map(|e| e.to_string()),
        });
        let mut cand = CoarseCandidate {
            iteration: k,
            functional_object: None,
            frame_index: None,
            point: None,
            valid: false,
            error: None,
        };
        match reply {
            Err(e) => cand.error = Some(e.to_string()),
            Ok(text) => match parse_affordance(&text, true, res) {
                Err(e) => cand.error = Some(e.to_string()),
                Ok(r) => {
                    cand.functional_object = r.functional_object;
                    cand.frame_index = r.frame_index;
                    cand.point = r.points.first().copied();
                    match r.frame_index {
                        Some(f) if f < scene.frames.len() => cand.valid = true,
                        Some(f) => cand.error = Some(format!("frame {f} outside 0..{}", scene.frames.len())),
                        None => {}
                    }
                }
            },
        }
        out.push(cand);
    }
    Ok(out)
}

/// Most frequent name among valid candidates; ties go to the name that
/// appeared in the earliest iteration.
pub fn resolve_object_name(candidates: &[CoarseCandidate]) -> Result<String, PipelineError> {
    let mut counts: Vec<(String, usize, usize)> = Vec::new();
    for c in candidates.iter().filter(|c| c.valid) {
        let Some(name) = c.functional_object.as_deref().map(|n| n.trim().to_lowercase()).filter(|n| !n.is_empty())
        else {
            continue;
        };
        match counts.iter_mut().find(|(n, _, _)| *n == name) {
            Some(entry) => entry.1 += 1,
            None => counts.push((name, 1, c.iteration)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(n, _, _)| n)
        .ok_or(PipelineError::NoValidCandidates)
}
