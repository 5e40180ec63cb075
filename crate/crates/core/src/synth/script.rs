use std::collections::HashMap;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::mllm::PixelPoint;
use crate::pipeline::rescale_point;
use crate::scene::Scene;

use super::build::{ObjectKind, QueryTarget, SceneObject};
use super::render::{render_view, NO_POINT};
use super::SynthError;

/// Sidecar file holding the generator's ground truth.
pub const ORACLE_FILE: &str = "oracle.json";

/// What the generator knows about a scene beyond the scene files themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub scene_id: String,
    pub seed: u64,
    pub objects: Vec<SceneObject>,
    pub targets: Vec<QueryTarget>,
}

impl Annotations {
    /// Object owning point `id`.
    pub fn object_of(&self, id: u32) -> Option<&SceneObject> {
        let i = self.objects.partition_point(|o| o.first + o.count <= id);
        self.objects.get(i).filter(|o| o.contains(id))
    }
}

/// Per-frame ownership of every pixel, the ground truth the oracle backends
/// answer from.
pub struct OracleScript {
    scene: Arc<Scene>,
    ann: Annotations,
    /// Per frame, row-major: owning object id + 1, or 0 for background.
    owners: Vec<Vec<u16>>,
    /// Visible pixels of each part per frame, row-major order.
    visible: HashMap<(u16, usize), Vec<PixelPoint>>,
    by_task: HashMap<String, usize>,
}

impl OracleScript {
    /// Re-renders every frame from the annotations and checks the result
    /// reproduces the stored color images.
    pub fn build(scene: Arc<Scene>, ann: Annotations) -> Result<Self, SynthError> {
        let mut owners = Vec::with_capacity(scene.frames.len());
        for frame in &scene.frames {
            let view = render_view(&scene.cloud.points, &ann.objects, &frame.camera, &frame.pose);
            if view.color != *frame.color {
                return Err(SynthError::Mismatch(format!(
                    "frame {} does not match a rendering of the annotated cloud",
                    frame.index
                )));
            }
            owners.push(owner_objects(&view.owner, &ann));
        }
        Self::from_owner_maps(scene, ann, owners)
    }

    pub(crate) fn from_owner_maps(scene: Arc<Scene>, ann: Annotations, owners: Vec<Vec<u16>>) -> Result<Self, SynthError> {
        if owners.len() != scene.frames.len() {
            return Err(SynthError::Mismatch("one owner map per frame required".into()));
        }
        let is_part: Vec<bool> = ann.objects.iter().map(|o| o.kind == ObjectKind::Part).collect();
        let mut visible: HashMap<(u16, usize), Vec<PixelPoint>> = HashMap::new();
        for (f, map) in owners.iter().enumerate() {
            let w = scene.frames[f].camera.width as usize;
            for (k, &o) in map.iter().enumerate() {
                if o != 0 && is_part[(o - 1) as usize] {
                    visible.entry((o - 1, f)).or_default().push(PixelPoint::new((k % w) as u32, (k / w) as u32));
                }
            }
        }
        let by_task = ann.targets.iter().enumerate().map(|(i, t)| (t.task.clone(), i)).collect();
        Ok(Self { scene, ann, owners, visible, by_task })
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn annotations(&self) -> &Annotations {
        &self.ann
    }

    pub fn object(&self, id: u16) -> &SceneObject {
        &self.ann.objects[id as usize]
    }

    pub fn target_for_task(&self, task: &str) -> Option<&QueryTarget> {
        self.by_task.get(task.trim()).map(|&i| &self.ann.targets[i])
    }

    pub fn frame_count(&self) -> usize {
        self.owners.len()
    }

    /// Object drawn at `(x, y)` of frame `f`.
    pub fn owner_at(&self, f: usize, x: u32, y: u32) -> Option<u16> {
        let w = self.scene.frames[f].camera.width;
        match self.owners[f][(y * w + x) as usize] {
            0 => None,
            o => Some(o - 1),
        }
    }

    /// Visible pixels of part `part` in frame `f`.
    pub fn visible_pixels(&self, part: u16, f: usize) -> &[PixelPoint] {
        self.visible.get(&(part, f)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Visible pixels of any object in frame `f`, row-major order.
    pub fn object_pixels(&self, object: u16, f: usize) -> Vec<PixelPoint> {
        let w = self.scene.frames[f].camera.width as usize;
        self.owners[f]
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == object + 1)
            .map(|(k, _)| PixelPoint::new((k % w) as u32, (k / w) as u32))
            .collect()
    }

    /// Frames in which `part` covers at least one pixel.
    pub fn frames_showing(&self, part: u16) -> Vec<usize> {
        (0..self.frame_count()).filter(|&f| !self.visible_pixels(part, f).is_empty()).collect()
    }

    /// Parts visible in frame `f`, by id.
    pub fn parts_in_frame(&self, f: usize) -> Vec<u16> {
        let mut parts: Vec<u16> = self.visible.keys().filter(|(_, g)| *g == f).map(|(p, _)| *p).collect();
        parts.sort_unstable();
        parts
    }

    /// Fraction of sampled pixels of frame `f` whose color matches `image`,
    /// which may be a rescaled or lightly edited copy of the frame.
    pub fn similarity(&self, f: usize, image: &RgbImage) -> f64 {
        let Some(frame) = self.scene.frames.get(f) else { return 0.0 };
        let native = frame.dims();
        let dims = image.dimensions();
        if dims.0 == 0 || dims.1 == 0 {
            return 0.0;
        }
        const GRID: u32 = 16;
        let mut hits = 0u32;
        for gy in 0..GRID {
            for gx in 0..GRID {
                let p = PixelPoint::new(
                    (gx * 2 + 1) * native.0 / (GRID * 2),
                    (gy * 2 + 1) * native.1 / (GRID * 2),
                );
                let q = rescale_point(p, native, dims);
                if frame.color.get_pixel(p.x, p.y) == image.get_pixel(q.x, q.y) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (GRID * GRID) as f64
    }
}

/// Converts a per-pixel point-id map to object ids (+1, 0 for none).
pub(crate) fn owner_objects(owner: &[u32], ann: &Annotations) -> Vec<u16> {
    let mut point_object = Vec::new();
    for o in &ann.objects {
        point_object.resize(point_object.len() + o.count as usize, o.id + 1);
    }
    owner.iter().map(|&p| if p == NO_POINT { 0 } else { point_object[p as usize] }).collect()
}
