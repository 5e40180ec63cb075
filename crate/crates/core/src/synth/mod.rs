//! Synthetic furnished rooms with exact ground truth, and oracle backends
//! that answer chat and segmentation requests from that ground truth.

mod build;
mod chat;
mod render;
mod script;
mod segmenter;
mod spec;

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::error::SceneError;
use crate::scene::{Frame, PointCloud, Scene, TaskQuery};
use crate::scene_io::{load_scene, save_scene};

pub use self::build::{build_layout, Layout, ObjectKind, QueryTarget, SceneObject};
pub use self::chat::{central_pixel, KeyFramePolicy, OracleChat, VERIFY_MAX_PARENT_FRACTION, VERIFY_MIN_IOU};
pub use self::render::{camera_model, render_view, trajectory_poses, View, NO_POINT};
pub use self::script::{Annotations, OracleScript, ORACLE_FILE};
pub use self::segmenter::{hull_distance, OracleSegmenter};
pub use self::spec::{
    FurnitureSpec, OccluderSpec, PartKind, PartSpec, SwitchSpec, SynthSpec, Trajectory, Wall,
};

/// Largest share of the cloud a single part may occupy.
pub const MAX_PART_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic scene: {0}")]
    Invalid(String),
    #[error("query {query} targets a part that no frame shows")]
    InvisibleTarget { query: String },
    #[error("oracle annotations inconsistent with scene: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// A generated scene together with its oracle ground truth.
#[derive(Clone)]
pub struct SynthScene {
    pub scene: Arc<Scene>,
    pub script: Arc<OracleScript>,
}

impl SynthScene {
    pub fn annotations(&self) -> &Annotations {
        self.script.annotations()
    }
}

/// Builds, renders and annotates the scene described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthScene, SynthError> {
    if spec.n_frames == 0 || !(spec.fps > 0.0) {
        return Err(SynthError::Invalid("need at least one frame and a positive frame rate".into()));
    }
    let layout = build_layout(spec);
    let total = layout.points.len() as f64;
    for t in &layout.targets {
        let part = &layout.objects[t.part as usize];
        if part.count as f64 >= MAX_PART_FRACTION * total {
            return Err(SynthError::Invalid(format!(
                "part of query {} has {} of {} points",
                t.query_id, part.count, total
            )));
        }
    }
    let scene_id = format!("synth-{:04}", spec.seed);
    let ann = Annotations {
        scene_id: scene_id.clone(),
        seed: spec.seed,
        objects: layout.objects,
        targets: layout.targets,
    };

    let camera = camera_model(spec);
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut owners = Vec::with_capacity(spec.n_frames);
    for (i, pose) in trajectory_poses(spec).into_iter().enumerate() {
        let view = render_view(&layout.points, &ann.objects, &camera, &pose);
        owners.push(script::owner_objects(&view.owner, &ann));
        frames.push(Frame {
            index: i,
            timestamp: i as f64 / spec.fps,
            color: Arc::new(view.color),
            depth: view.depth,
            camera,
            pose,
        });
    }
    let queries = ann
        .targets
        .iter()
        .map(|t| TaskQuery {
            id: t.query_id.clone(),
            text: t.task.clone(),
            gt_mask: Some(ann.objects[t.part as usize].point_ids().collect()),
        })
        .collect();
    let scene = Arc::new(Scene { id: scene_id, cloud: PointCloud::new(layout.points), frames, queries });
    scene.validate()?;

    let script = OracleScript::from_owner_maps(Arc::clone(&scene), ann, owners)?;
    for t in &script.annotations().targets {
        if script.frames_showing(t.part).is_empty() {
            return Err(SynthError::InvisibleTarget { query: t.query_id.clone() });
        }
    }
    Ok(SynthScene { scene, script: Arc::new(script) })
}

/// Writes the scene directory plus the oracle sidecar.
pub fn write_synth_scene(synth: &SynthScene, dir: &Path) -> Result<(), SynthError> {
    save_scene(&synth.scene, dir)?;
    let path = dir.join(ORACLE_FILE);
    let json = serde_json::to_vec_pretty(synth.annotations())
        .map_err(|source| SynthError::Json { path: path.display().to_string(), source })?;
    std::fs::write(&path, json).map_err(|source| SynthError::Io { path: path.display().to_string(), source })
}

/// Loads a scene directory written by [`write_synth_scene`] and rebuilds its
/// oracle, checking the sidecar still matches the frames.
pub fn load_synth_scene(dir: &Path) -> Result<SynthScene, SynthError> {
    let scene = Arc::new(load_scene(dir)?);
    let path = dir.join(ORACLE_FILE);
    let text = std::fs::read(&path).map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
    let ann: Annotations =
        serde_json::from_slice(&text).map_err(|source| SynthError::Json { path: path.display().to_string(), source })?;
    let mut next = 0u32;
    for (i, o) in ann.objects.iter().enumerate() {
        if o.id as usize != i || o.first != next {
            return Err(SynthError::Mismatch(format!("object {i} is out of order")));
        }
        next += o.count;
    }
    if next as usize != scene.cloud.len() {
        return Err(SynthError::Mismatch(format!("objects cover {next} points, cloud has {}", scene.cloud.len())));
    }
    if let Some(t) = ann.targets.iter().find(|t| t.part as usize >= ann.objects.len()) {
        return Err(SynthError::Mismatch(format!("query {} names unknown object {}", t.query_id, t.part)));
    }
    let script = OracleScript::build(Arc::clone(&scene), ann)?;
    Ok(SynthScene { scene, script: Arc::new(script) })
}
