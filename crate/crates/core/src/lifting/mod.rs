//! Lifting verified 2D masks onto the scene cloud and multi-view voting.

mod index;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::{Frame, Scene};
use crate::segment::VerifiedMask2D;

pub use self::index::PointIndex;

pub const DEFAULT_TAU: f64 = 0.7;
/// Default association radius, in multiples of the median point spacing.
pub const EPSILON_SPACING_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiftError {
    #[error("pixel ({u}, {v}) outside {width}x{height} frame")]
    PixelOutOfBounds { u: u32, v: u32, width: u32, height: u32 },
    #[error("mask references frame {0}, which the scene does not have")]
    UnknownFrame(usize),
    #[error("mask is {mask:?} but frame {frame} is {image:?}")]
    DimensionMismatch { frame: usize, mask: (u32, u32), image: (u32, u32) },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Divide by the largest vote.
    #[default]
    Max,
    /// Divide by the number of masks, capped at 1.
    Views,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftingConfig {
    /// Association radius in meters; derived from the cloud when unset.
    pub epsilon: Option<f64>,
    pub normalize: Normalization,
    /// Weight each mask's votes by its segmentation score.
    pub weight_by_score: bool,
}

/// Per-scene state reused across queries.
#[derive(Debug, Clone)]
pub struct LiftingContext {
    pub index: Arc<PointIndex>,
    pub epsilon: f64,
}

impl LiftingContext {
    pub fn new(scene: &Scene, cfg: &LiftingConfig) -> Self {
        let index = Arc::new(PointIndex::new(&scene.cloud));
        let epsilon = cfg.epsilon.unwrap_or_else(|| EPSILON_SPACING_FACTOR * index.median_spacing());
        Self { index, epsilon }
    }

    pub fn from_index(index: PointIndex, epsilon: f64) -> Self {
        Self { index: Arc::new(index), epsilon }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { index: Arc::clone(&self.index), epsilon }
    }
}

/// World point seen at pixel `(u, v)`, or `None` where depth is invalid.
pub fn backproject(frame: &Frame, u: u32, v: u32) -> Result<Option<Vec3>, LiftError> {
    let (width, height) = frame.dims();
    if u >= width || v >= height {
        return Err(LiftError::PixelOutOfBounds { u, v, width, height });
    }
    Ok(frame.depth_m(u, v).map(|z| frame.pose.transform_point(frame.camera.unproject(u, v, z))))
}

/// Nearest cloud point within `epsilon` meters.
pub fn associate(point: Vec3, index: &PointIndex, epsilon: f64) -> Option<u32> {
    index.associate(point, epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteHeatmap {
    /// Number of mask pixels landing on each point.
    pub votes: Vec<u32>,
    /// Vote mass used for normalization (equal to `votes` unless weighted).
    pub weighted: Vec<f64>,
    pub normalized: Vec<f64>,
    pub masks_used: usize,
}

impl VoteHeatmap {
    pub fn zeros(n: usize) -> Self {
        Self { votes: vec![0; n], weighted: vec![0.0; n], normalized: vec![0.0; n], masks_used: 0 }
    }

    pub fn max_vote(&self) -> u32 {
        self.votes.iter().copied().max().unwrap_or(0)
    }

    fn normalize(&mut self, how: Normalization) {
        let divisor = match how {
            Normalization::Max => self.weighted.iter().copied().fold(0.0, f64::max),
            Normalization::Views => self.masks_used as f64,
        };
        self.normalized = if divisor > 0.0 {
            self.weighted.iter().map(|w| (w / divisor).min(1.0)).collect()
        } else {
            vec![0.0; self.weighted.len()]
        };
    }
}

/// Cloud ids hit by the pixels of one mask, one entry per mapped pixel.
fn mask_hits(scene: &Scene, mask: &VerifiedMask2D, ctx: &LiftingContext) -> Result<Vec<u32>, LiftError> {
    let m = &mask.mask;
    let frame = scene.frames.get(m.frame_index).ok_or(LiftError::UnknownFrame(m.frame_index))?;
    if m.rle.dims() != frame.dims() {
        return Err(LiftError::DimensionMismatch { frame: m.frame_index, mask: m.rle.dims(), image: frame.dims() });
    }
    let mut hits = Vec::new();
    for (u, v) in m.rle.pixels() {
        if let Some(p) = backproject(frame, u, v)? {
            if let Some(id) = ctx.index.associate(p, ctx.epsilon) {
                hits.push(id);
            }
        }
    }
    Ok(hits)
}

/// Counts, for every cloud point, how many accepted mask pixels map onto it.
/// Masks with a NO verdict are ignored. Masks are lifted in parallel and
/// merged in input order, so the result matches a sequential pass exactly.
pub fn accumulate_votes(
    scene: &Scene,
    masks: &[VerifiedMask2D],
    ctx: &LiftingContext,
    cfg: &LiftingConfig,
) -> Result<VoteHeatmap, LiftError> {
    let accepted: Vec<&VerifiedMask2D> = masks.iter().filter(|m| m.verdict.is_yes()).collect();
    let hits: Vec<Vec<u32>> =
        accepted.par_iter().map(|m| mask_hits(scene, m, ctx)).collect::<Result<_, _>>()?;

    let mut heat = VoteHeatmap::zeros(scene.cloud.len());
    heat.masks_used = accepted.len();
    for (mask, ids) in accepted.iter().zip(&hits) {
        let w = if cfg.weight_by_score { mask.mask.score } else { 1.0 };
        for &id in ids {
            heat.votes[id as usize] += 1;
            heat.weighted[id as usize] += w;
        }
    }
    heat.normalize(cfg.normalize);
    Ok(heat)
}

/// Final 3D mask: sorted cloud ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Mask3D {
    pub point_ids: Vec<u32>,
    pub confidence: f64,
}

impl Mask3D {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }
}

/// Keeps the points whose normalized score is strictly above `tau`.
pub fn consensus(heat: &VoteHeatmap, tau: f64) -> Mask3D {
    let point_ids: Vec<u32> =
        heat.normalized.iter().enumerate().filter(|(_, s)| **s > tau).map(|(i, _)| i as u32).collect();
    let confidence = if point_ids.is_empty() { 0.0 } else { heat.normalized.iter().copied().fold(0.0, f64::max) };
    Mask3D { point_ids, confidence }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraModel, Pose};
    use crate::mllm::{PixelPoint, VerificationVerdict};
    use crate::scene::{DepthImage, PointCloud, TaskQuery};
    use crate::segment::{BinaryMask, Mask2D, Rle};
    use image::{Luma, RgbImage};

    fn cam() -> CameraModel {
        CameraModel { fx: 100.0, fy: 100.0, cx: 2.0, cy: 2.0, width: 5, height: 5 }
    }

    fn frame(index: usize, depth_mm: u16) -> Frame {
        Frame {
            index,
            timestamp: index as f64,
            color: Arc::new(RgbImage::new(5, 5)),
            depth: DepthImage::from_pixel(5, 5, Luma([depth_mm])),
            camera: cam(),
            pose: Pose::identity(),
        }
    }

    #[test]
    fn backprojection_examples() {
        let f = frame(0, 2000);
        assert_eq!(backproject(&f, 2, 2).unwrap(), Some([0.0, 0.0, 2.0]));
        let mut wide = f.clone();
        wide.camera = CameraModel { fx: 2.0, fy: 2.0, cx: 1.0, cy: 2.0, width: 5, height: 5 };
        assert_eq!(backproject(&wide, 3, 2).unwrap(), Some([2.0, 0.0, 2.0]));
        assert_eq!(backproject(&frame(0, 0), 2, 2).unwrap(), None);
        assert!(matches!(backproject(&f, 5, 0), Err(LiftError::PixelOutOfBounds { .. })));
        let mut moved = f.clone();
        moved.pose.translation = [1.0, -1.0, 0.5];
        assert_eq!(backproject(&moved, 2, 2).unwrap(), Some([1.0, -1.0, 2.5]));
    }

    /// Three cloud points seen by three views; each mask covers a subset.
    fn abc_scene() -> Scene {
        // With cx = cy = 2 and depth 1 m, pixel (u, 2) maps to ((u-2)/100, 0, 1).
        let cloud = PointCloud::new(vec![[-0.02, 0.0, 1.0], [0.0, 0.0, 1.0], [0.02, 0.0, 1.0]]);
        Scene {
            id: "abc".into(),
            cloud,
            frames: (0..3).map(|i| frame(i, 1000)).collect(),
            queries: vec![TaskQuery::new("q", "t")],
        }
    }

    fn vmask(frame_index: usize, px: &[(u32, u32)], verdict: VerificationVerdict) -> VerifiedMask2D {
        VerifiedMask2D {
            mask: Mask2D {
                frame_index,
                rle: Rle::encode(&BinaryMask::from_pixels(5, 5, px.iter().copied())),
                score: 0.5,
                prompt_point: PixelPoint::new(0, 0),
            },
            verdict,
            object_name: "a".into(),
            note: None,
        }
    }

    #[test]
    fn three_view_fixture_keeps_only_a() {
        let scene = abc_scene();
        let (a, b, c) = ((0, 2), (2, 2), (4, 2));
        let yes = VerificationVerdict::Yes;
        let masks = vec![vmask(0, &[a, b, c], yes), vmask(1, &[a, b], yes), vmask(2, &[a], yes)];
        let ctx = LiftingContext::from_index(PointIndex::new(&scene.cloud), 0.005);
        let heat = accumulate_votes(&scene, &masks, &ctx, &LiftingConfig::default()).unwrap();
        assert_eq!(heat.votes, vec![3, 2, 1]);
        assert_eq!(heat.normalized, vec![1.0, 2.0 / 3.0, 1.0 / 3.0]);
        let m = consensus(&heat, DEFAULT_TAU);
        assert_eq!(m.point_ids, vec![0]);
        assert_eq!(m.confidence, 1.0);

        // Rejected masks never vote.
        let mut with_no = masks.clone();
        with_no.push(vmask(0, &[c], VerificationVerdict::No));
        assert_eq!(accumulate_votes(&scene, &with_no, &ctx, &LiftingConfig::default()).unwrap(), heat);
    }

    #[test]
    fn degenerate_heatmaps() {
        let scene = abc_scene();
        let ctx = LiftingContext::new(&scene, &LiftingConfig::default());
        assert!((ctx.epsilon - 0.04).abs() < 1e-6);
        let heat = accumulate_votes(&scene, &[], &ctx, &LiftingConfig::default()).unwrap();
        assert_eq!(heat.votes, vec![0, 0, 0]);
        let m = consensus(&heat, 0.7);
        assert!(m.is_empty());
        assert_eq!(m.confidence, 0.0);

        // Single mask: every covered point is at 1.0 and kept.
        let one = vec![vmask(0, &[(0, 2), (4, 2)], VerificationVerdict::Yes)];
        let m = consensus(&accumulate_votes(&scene, &one, &ctx, &LiftingConfig::default()).unwrap(), 0.7);
        assert_eq!(m.point_ids, vec![0, 2]);

        // All-invalid depth gives no votes.
        let mut blind = scene.clone();
        blind.frames[0] = frame(0, 0);
        let heat = accumulate_votes(&blind, &one, &ctx, &LiftingConfig::default()).unwrap();
        assert_eq!(heat.max_vote(), 0);
    }

    #[test]
    fn strict_threshold_and_alternative_normalizations() {
        let mut heat = VoteHeatmap::zeros(2);
        heat.normalized = vec![0.7, 0.71];
        assert_eq!(consensus(&heat, 0.7).point_ids, vec![1]);

        let scene = abc_scene();
        let ctx = LiftingContext::from_index(PointIndex::new(&scene.cloud), 0.005);
        let yes = VerificationVerdict::Yes;
        let masks = vec![vmask(0, &[(0, 2)], yes), vmask(1, &[(0, 2), (2, 2)], yes)];
        let cfg = LiftingConfig { normalize: Normalization::Views, ..Default::default() };
        let heat = accumulate_votes(&scene, &masks, &ctx, &cfg).unwrap();
        assert_eq!(heat.normalized, vec![1.0, 0.5, 0.0]);

        let mut weighted = masks.clone();
        weighted[1].mask.score = 1.0;
        let cfg = LiftingConfig { weight_by_score: true, ..Default::default() };
        let heat = accumulate_votes(&scene, &weighted, &ctx, &cfg).unwrap();
        assert_eq!(heat.votes, vec![2, 1, 0]);
        assert_eq!(heat.weighted, vec![1.5, 1.0, 0.0]);
        assert_eq!(heat.normalized, vec![1.0, 1.0 / 1.5, 0.0]);
    }

    #[test]
    fn bad_masks_are_errors() {
        let scene = abc_scene();
        let ctx = LiftingContext::new(&scene, &LiftingConfig::default());
        let m = vmask(9, &[(0, 0)], VerificationVerdict::Yes);
        assert_eq!(accumulate_votes(&scene, &[m], &ctx, &LiftingConfig::default()), Err(LiftError::UnknownFrame(9)));
    }
}
