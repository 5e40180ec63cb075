//! On-disk scene directories.
//!
//! ```text
//! <root>/manifest.json
//! <root>/cloud.ply                   binary little-endian, float32 xyz
//! <root>/frames/NNNNNN.color.png     8-bit RGB
//! <root>/frames/NNNNNN.depth.png     16-bit grayscale, millimeters, 0 = invalid
//! <root>/gt/<query_id>.ids           one point id per line
//! ```
//!
//! Poses are stored camera-to-world as 16 row-major floats.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SceneError;
use crate::geometry::{CameraModel, Pose};
use crate::ply;
use crate::scene::{DepthImage, Frame, PointCloud, Scene, TaskQuery};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLOUD_FILE: &str = "cloud.ply";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    scene_id: String,
    frames: Vec<FrameEntry>,
    queries: Vec<QueryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    index: usize,
    timestamp_s: f64,
    color: String,
    depth: String,
    intrinsics: CameraModel,
    pose_c2w: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryEntry {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_mask: Option<String>,
}

pub fn frame_color_path(index: usize) -> String {
    format!("frames/{index:06}.color.png")
}

pub fn frame_depth_path(index: usize) -> String {
    format!("frames/{index:06}.depth.png")
}

pub fn gt_path(query_id: &str) -> String {
    format!("gt/{query_id}.ids")
}

/// Loads and validates a scene directory. Frames are sorted by timestamp.
pub fn load_scene(root: &Path) -> Result<Scene, SceneError> {
    let manifest_path = root.join(MANIFEST_FILE);
    let raw = read_existing(root, MANIFEST_FILE)?;
    let mut de = serde_json::Deserializer::from_slice(&raw);
    let manifest: Manifest = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        SceneError::schema(field, e.into_inner().to_string())
    })?;
    tracing::debug!(path = %manifest_path.display(), frames = manifest.frames.len(), "loading scene");

    let cloud_raw = read_existing(root, CLOUD_FILE)?;
    let cloud = PointCloud::new(ply::read_ply(&cloud_raw[..])?);

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (i, entry) in manifest.frames.iter().enumerate() {
        frames.push(load_frame(root, i, entry)?);
    }
    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut queries = Vec::with_capacity(manifest.queries.len());
    for (i, entry) in manifest.queries.iter().enumerate() {
        let gt_mask = match &entry.gt_mask {
            Some(rel) => Some(read_ids(root, rel, &format!("queries[{i}].gt_mask"))?),
            None => None,
        };
        queries.push(TaskQuery { id: entry.id.clone(), text: entry.text.clone(), gt_mask });
    }

    let scene = Scene { id: manifest.scene_id, cloud, frames, queries };
    scene.validate()?;
    Ok(scene)
}

fn load_frame(root: &Path, i: usize, entry: &FrameEntry) -> Result<Frame, SceneError> {
    let pose_values: [f64; 16] = entry.pose_c2w.as_slice().try_into().map_err(|_| {
        SceneError::schema(
            format!("frames[{i}].pose_c2w"),
            format!("expected 16 values, found {}", entry.pose_c2w.len()),
        )
    })?;
    let pose = Pose::from_row_major(&pose_values).ok_or_else(|| {
        SceneError::schema(format!("frames[{i}].pose_c2w"), "bottom row must be [0, 0, 0, 1]")
    })?;

    let color_raw = read_existing(root, &entry.color)?;
    let color = image::load_from_memory_with_format(&color_raw, image::ImageFormat::Png)
        .map_err(|source| SceneError::Image { path: root.join(&entry.color), source })?;
    let color = match color {
        image::DynamicImage::ImageRgb8(img) => img,
        other => {
            return Err(SceneError::schema(
                format!("frames[{i}].color"),
                format!("expected 8-bit RGB PNG, found {:?}", other.color()),
            ))
        }
    };

    let depth_raw = read_existing(root, &entry.depth)?;
    let depth = image::load_from_memory_with_format(&depth_raw, image::ImageFormat::Png)
        .map_err(|source| SceneError::Image { path: root.join(&entry.depth), source })?;
    let depth: DepthImage = match depth {
        image::DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(SceneError::schema(
                format!("frames[{i}].depth"),
                format!("expected 16-bit grayscale PNG, found {:?}", other.color()),
            ))
        }
    };

    Ok(Frame {
        index: entry.index,
        timestamp: entry.timestamp_s,
        color: Arc::new(color),
        depth,
        camera: entry.intrinsics,
        pose,
    })
}

fn read_existing(root: &Path, rel: &str) -> Result<Vec<u8>, SceneError> {
    let path = root.join(rel);
    fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SceneError::MissingFile(rel.to_string()),
        _ => SceneError::io(path, e),
    })
}

fn read_ids(root: &Path, rel: &str, field: &str) -> Result<Vec<u32>, SceneError> {
    let raw = read_existing(root, rel)?;
    let text = String::from_utf8(raw)
        .map_err(|_| SceneError::schema(field, format!("{rel} is not UTF-8")))?;
    parse_ids(&text).map_err(|line| SceneError::schema(field, format!("{rel}: bad point id `{line}`")))
}

/// Parses one id per line (blank lines ignored) into a sorted, unique list.
pub fn parse_ids(text: &str) -> Result<Vec<u32>, String> {
    let mut ids = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        ids.push(t.parse::<u32>().map_err(|_| t.to_string())?);
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

pub fn format_ids(ids: &[u32]) -> String {
    let mut s = String::with_capacity(ids.len() * 7);
    for id in ids {
        s.push_str(&id.to_string());
        s.push('\n');
    }
    s
}

/// Writes `scene` so that [`load_scene`] reproduces it exactly.
pub fn save_scene(scene: &Scene, root: &Path) -> Result<(), SceneError> {
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| SceneError::io(p, e));
    mkdir(root)?;
    mkdir(&root.join("frames"))?;

    let mut frames = Vec::with_capacity(scene.frames.len());
    for frame in &scene.frames {
        let color = frame_color_path(frame.index);
        let depth = frame_depth_path(frame.index);
        save_png(root, &color, |p| frame.color.save_with_format(p, image::ImageFormat::Png))?;
        save_png(root, &depth, |p| frame.depth.save_with_format(p, image::ImageFormat::Png))?;
        frames.push(FrameEntry {
            index: frame.index,
            timestamp_s: frame.timestamp,
            color,
            depth,
            intrinsics: frame.camera,
            pose_c2w: frame.pose.to_row_major().to_vec(),
        });
    }

    let mut queries = Vec::with_capacity(scene.queries.len());
    for q in &scene.queries {
        let gt_mask = match &q.gt_mask {
            Some(ids) => {
                let rel = gt_path(&q.id);
                mkdir(&root.join("gt"))?;
                write_file(root, &rel, format_ids(ids).as_bytes())?;
                Some(rel)
            }
            None => None,
        };
        queries.push(QueryEntry { id: q.id.clone(), text: q.text.clone(), gt_mask });
    }

    let cloud_path = root.join(CLOUD_FILE);
    let file = fs::File::create(&cloud_path).map_err(|e| SceneError::io(&cloud_path, e))?;
    ply::write_ply(BufWriter::new(file), &scene.cloud.points, None)
        .map_err(|e| SceneError::io(&cloud_path, e))?;

    let manifest = Manifest { scene_id: scene.id.clone(), frames, queries };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(root, MANIFEST_FILE, &json)
}

fn save_png(
    root: &Path,
    rel: &str,
    save: impl FnOnce(&Path) -> image::ImageResult<()>,
) -> Result<(), SceneError> {
    let path = root.join(rel);
    save(&path).map_err(|source| match source {
        image::ImageError::IoError(e) => SceneError::io(&path, e),
        source => SceneError::Image { path: path.clone(), source },
    })
}

fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<(), SceneError> {
    let path = root.join(rel);
    fs::write(&path, bytes).map_err(|e| SceneError::io(path, e))
}

/// Reads just the point cloud of a scene directory.
pub fn load_cloud(root: &Path) -> Result<PointCloud, SceneError> {
    let path = root.join(CLOUD_FILE);
    let file = fs::File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SceneError::MissingFile(CLOUD_FILE.into()),
        _ => SceneError::io(&path, e),
    })?;
    Ok(PointCloud::new(ply::read_ply(BufReader::new(file))?))
}
