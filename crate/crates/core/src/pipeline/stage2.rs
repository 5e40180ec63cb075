use rayon::prelude::*;

use crate::mllm::{ChatBackend, PixelPoint};
use crate::segment::{segment, verify_mask, SegBackend, SegError, VerifiedMask2D};

use super::fine::FramePoints;
use super::trace::{Exchange, MaskRecord, Stage};
use super::{PipelineConfig, SceneContext};

pub struct Stage2Output {
    /// Masks that enter lifting, in (frame, point) order.
    pub accepted: Vec<VerifiedMask2D>,
    pub records: Vec<MaskRecord>,
}

/// Segments every (frame, point) prompt and, when enabled, keeps only masks
/// the verifier accepts.
pub fn run_stage2(
    ctx: &SceneContext,
    points: &FramePoints,
    object: &str,
    cfg: &PipelineConfig,
    chat: &dyn ChatBackend,
    seg: &dyn SegBackend,
    log: &mut Vec<Exchange>,
) -> Stage2Output {
    let scene = ctx.scene.as_ref();
    let tasks: Vec<(usize, PixelPoint)> =
        points.iter().flat_map(|(f, pts)| pts.iter().map(move |p| (*f, *p))).collect();

    let results: Vec<(Option<VerifiedMask2D>, Vec<Exchange>)> = tasks
        .par_iter()
        .map(|&(f, p)| {
            let frame = &scene.frames[f];
            let mut exchanges = Vec::new();
            let seg_ex = |response: Option<String>, error: Option<String>| Exchange {
                stage: Stage::Segment,
                frames: vec![f],
                prompt: format!("point ({}, {})", p.x, p.y),
                response,
                error,
            };
            let best = match segment(seg, f, &frame.color, p, cfg.seg_confidence) {
                Ok(mut masks) => {
                    let m = masks.swap_remove(0);
                    exchanges.push(seg_ex(Some(format!("score {} area {}", m.score, m.area())), None));
                    m
                }
                Err(SegError::EmptyResult) => {
                    exchanges.push(seg_ex(None, Some(SegError::EmptyResult.to_string())));
                    return (None, exchanges);
                }
                Err(e) => {
                    tracing::warn!(frame = f, error = %e, "segmentation failed");
                    exchanges.push(seg_ex(None, Some(e.to_string())));
                    return (None, exchanges);
                }
            };
            if !cfg.enable_verification {
                return (Some(VerifiedMask2D::unverified(best, object)), exchanges);
            }
            match verify_mask(chat, &frame.color, &best, object, cfg.overlay_alpha, &cfg.chat) {
                Ok(v) => {
                    exchanges.push(Exchange {
                        stage: Stage::Verify,
                        frames: vec![f],
                        prompt: format!("verify {object}"),
                        response: v.note.clone(),
                        error: None,
                    });
                    (Some(v), exchanges)
                }
                Err(e) => {
                    exchanges.push(Exchange {
                        stage: Stage::Verify,
                        frames: vec![f],
                        prompt: format!("verify {object}"),
                        response: None,
                        error: Some(e.to_string()),
                    });
                    (None, exchanges)
                }
            }
        })
        .collect();

    let mut accepted = Vec::new();
    let mut records = Vec::new();
    for (mask, exchanges) in results {
        log.extend(exchanges);
        let Some(v) = mask else { continue };
        records.push(MaskRecord {
            frame_index: v.mask.frame_index,
            prompt_point: v.mask.prompt_point,
            score: v.mask.score,
            area: v.mask.area(),
            verdict: cfg.enable_verification.then_some(v.verdict),
        });
        if v.verdict.is_yes() {
            accepted.push(v);
        }
    }
    Stage2Output { accepted, records }
}
