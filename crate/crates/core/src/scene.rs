//! In-memory scene model: point cloud, posed RGB-D frames and task queries.

use std::sync::Arc;

use image::{ImageBuffer, Luma, RgbImage};

use crate::error::SceneError;
use crate::geometry::{CameraModel, Pose, Vec3};

/// Depth map in integer millimeters; 0 marks an invalid measurement.
pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// Maximum deviation of a pose rotation from orthonormality.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Scene point cloud. Point ids are the dense indices `0..len()`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, id: u32) -> Vec3 {
        let p = self.points[id as usize];
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    pub fn contains_id(&self, id: u32) -> bool {
        (id as usize) < self.points.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    pub color: Arc<RgbImage>,
    pub depth: DepthImage,
    pub camera: CameraModel,
    pub pose: Pose,
}

impl Frame {
    /// Depth at pixel `(u, v)` in meters, `None` when invalid (0).
    pub fn depth_m(&self, u: u32, v: u32) -> Option<f64> {
        let mm = self.depth.get_pixel(u, v).0[0];
        (mm != 0).then(|| mm as f64 / 1000.0)
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.camera.width, self.camera.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskQuery {
    pub id: String,
    pub text: String,
    /// Ground-truth point ids, sorted and unique. Evaluation only.
    pub gt_mask: Option<Vec<u32>>,
}

impl TaskQuery {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), gt_mask: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub cloud: PointCloud,
    pub frames: Vec<Frame>,
    pub queries: Vec<TaskQuery>,
}

impl Scene {
    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }

    pub fn query(&self, id: &str) -> Option<&TaskQuery> {
        self.queries.iter().find(|q| q.id == id)
    }

    /// Checks every structural invariant. Frames must already be in
    /// timestamp order with `index == position`.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.cloud.is_empty() {
            return Err(SceneError::Invariant("point cloud is empty".into()));
        }
        if let Some(i) = self.cloud.points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(SceneError::Invariant(format!("point {i} has a non-finite coordinate")));
        }
        if self.frames.is_empty() {
            return Err(SceneError::Invariant("scene has no frames".into()));
        }
        for (pos, frame) in self.frames.iter().enumerate() {
            validate_frame(frame, pos)?;
            if pos > 0 && frame.timestamp <= self.frames[pos - 1].timestamp {
                return Err(SceneError::Invariant(format!(
                    "timestamps not strictly increasing at frame {}",
                    frame.index
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for q in &self.queries {
            if q.text.trim().is_empty() {
                return Err(SceneError::Invariant(format!("query {} has empty text", q.id)));
            }
            if !seen.insert(q.id.as_str()) {
                return Err(SceneError::Invariant(format!("duplicate query id {}", q.id)));
            }
            if let Some(gt) = &q.gt_mask {
                if let Some(bad) = gt.iter().find(|&&id| !self.cloud.contains_id(id)) {
                    return Err(SceneError::Invariant(format!(
                        "query {} ground truth references point {bad} outside the cloud",
                        q.id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn validate_frame(frame: &Frame, pos: usize) -> Result<(), SceneError> {
    if frame.index != pos {
        return Err(SceneError::Invariant(format!(
            "frame at position {pos} has index {}",
            frame.index
        )));
    }
    if !frame.timestamp.is_finite() {
        return Err(SceneError::Invariant(format!("frame {pos} timestamp is not finite")));
    }
    if !frame.camera.is_valid() {
        return Err(SceneError::Invariant(format!("frame {pos} has invalid intrinsics")));
    }
    let dims = frame.dims();
    if frame.color.dimensions() != dims || frame.depth.dimensions() != dims {
        return Err(SceneError::Invariant(format!(
            "frame {pos} image size does not match its intrinsics {}x{}",
            dims.0, dims.1
        )));
    }
    let err = frame.pose.orthonormality_error();
    if err > ROTATION_TOLERANCE {
        return Err(SceneError::Invariant(format!(
            "frame {pos} pose rotation is not orthonormal (error {err:e})"
        )));
    }
    if frame.pose.translation.iter().any(|c| !c.is_finite()) {
        return Err(SceneError::Invariant(format!("frame {pos} pose translation is not finite")));
    }
    Ok(())
}
