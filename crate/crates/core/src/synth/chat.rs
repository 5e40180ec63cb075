use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::mllm::{
    parse_frame_tag, render_affordance, AffordanceResponse, ChatBackend, ChatRequest, PixelPoint, ROUND1_MARKER,
    ROUND2_PREFIX, VERIFY_PREFIX,
};
use crate::pipeline::rescale_point;

use super::script::OracleScript;

/// How the oracle picks the key frame in the coarse round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyFramePolicy {
    /// The attached frame where the target part covers the most pixels.
    #[default]
    BestVisible,
    /// The attached frame where the part's parent object is most centered,
    /// whether or not the part itself is visible there.
    ParentCentered,
}

/// Minimum overlap between a highlighted region and a part for a YES.
pub const VERIFY_MIN_IOU: f64 = 0.5;
/// Maximum share of a highlighted region that may lie on the parent object.
pub const VERIFY_MAX_PARENT_FRACTION: f64 = 0.3;

/// Vision-chat backend answering from the generator's ground truth.
pub struct OracleChat {
    scripts: Vec<Arc<OracleScript>>,
    policy: KeyFramePolicy,
}

impl OracleChat {
    pub fn new(scripts: Vec<Arc<OracleScript>>) -> Self {
        Self { scripts, policy: KeyFramePolicy::default() }
    }

    pub fn with_policy(mut self, policy: KeyFramePolicy) -> Self {
        self.policy = policy;
        self
    }

    fn round1(&self, text: &str, images: &[(usize, &RgbImage)]) -> Result<String, BackendError> {
        let task = between(text, "the task: ", &format!(", {ROUND1_MARKER}"))
            .ok_or_else(|| bad_request("round-1 prompt without a task"))?;
        let Some(&(_, first)) = images.first() else { return Err(bad_request("no frames attached")) };
        let frames: Vec<usize> = images.iter().map(|(f, _)| *f).collect();
        let Some(script) = self.pick(first, frames[0], |s| s.target_for_task(task).is_some()) else {
            return Ok(format!("I cannot tell which object is needed to {task}."));
        };
        let part = script.target_for_task(task).expect("filtered").part;
        let name = script.object(part).name.clone();

        let choice = match self.policy {
            KeyFramePolicy::BestVisible => best_visible(script, part, images),
            KeyFramePolicy::ParentCentered => {
                parent_centered(script, part, images).or_else(|| best_visible(script, part, images))
            }
        };
        let Some((f, point, dims)) = choice else {
            return Ok(format!("None of these frames shows the {name}; I cannot pick a key frame."));
        };
        Ok(render_affordance(&AffordanceResponse {
            functional_object: Some(name),
            frame_index: Some(f),
            points: vec![point_in(point, script.scene().frames[f].dims(), dims)],
        }))
    }

    fn round2(&self, text: &str, images: &[(usize, &RgbImage)]) -> Result<String, BackendError> {
        let rest = text.strip_prefix(ROUND2_PREFIX).unwrap_or(text);
        let (object, task) = rest.split_once(" in order to ").ok_or_else(|| bad_request("round-2 prompt without a task"))?;
        let task = task.rsplit_once(". Output format:").map_or(task, |(t, _)| t);
        let &[(f, image)] = images else { return Err(bad_request("round 2 expects exactly one frame")) };
        let Some(script) = self.pick(image, f, |s| s.target_for_task(task).is_some()) else {
            return Ok(format!("I cannot find the {object} in this frame."));
        };
        let part = script.target_for_task(task).expect("filtered").part;
        match central_pixel(script.visible_pixels(part, f)) {
            Some(p) => Ok(render_affordance(&AffordanceResponse {
                functional_object: None,
                frame_index: None,
                points: vec![point_in(p, script.scene().frames[f].dims(), image.dimensions())],
            })),
            None => Ok(format!("The {object} is not visible in this frame.")),
        }
    }

    fn verify(&self, text: &str, images: &[(usize, &RgbImage)]) -> Result<String, BackendError> {
        let rest = text.strip_prefix(VERIFY_PREFIX).unwrap_or(text);
        let object = rest.split_once('?').map(|(o, _)| o.trim()).ok_or_else(|| bad_request("verify prompt without an object"))?;
        let &[(f, overlay)] = images else { return Err(bad_request("verification expects exactly one image")) };
        let has_named_part = |s: &OracleScript| {
            s.parts_in_frame(f).iter().any(|&p| s.object(p).name.eq_ignore_ascii_case(object))
        };
        let Some(script) = self.pick(overlay, f, has_named_part) else { return Ok("NO".into()) };
        Ok(if verify_overlay(script, f, overlay, object) { "YES" } else { "NO" }.into())
    }

    /// The script whose frame `f` the image most resembles, among those
    /// passing `filter`. Ties go to the earlier script.
    fn pick(&self, image: &RgbImage, f: usize, filter: impl Fn(&OracleScript) -> bool) -> Option<&OracleScript> {
        let mut best: Option<(&OracleScript, f64)> = None;
        for s in self.scripts.iter().filter(|s| f < s.frame_count() && filter(s)) {
            if self.scripts.len() == 1 {
                return Some(s);
            }
            let score = s.similarity(f, image);
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((s, score));
            }
        }
        best.map(|(s, _)| s)
    }
}

impl ChatBackend for OracleChat {
    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let text = req.prompt_text();
        let mut images = Vec::new();
        for (tag, img) in req.image_parts() {
            let f = parse_frame_tag(tag).ok_or_else(|| bad_request(&format!("unreadable image tag {tag:?}")))?;
            images.push((f, img));
        }
        if text.contains(ROUND1_MARKER) {
            self.round1(&text, &images)
        } else if text.starts_with(ROUND2_PREFIX) {
            self.round2(&text, &images)
        } else if text.starts_with(VERIFY_PREFIX) {
            self.verify(&text, &images)
        } else {
            Err(bad_request("unrecognized request"))
        }
    }
}

fn bad_request(msg: &str) -> BackendError {
    BackendError::Status { status: 400, body: msg.to_string() }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let a = text.find(start)? + start.len();
    let b = text[a..].rfind(end)? + a;
    Some(text[a..b].trim())
}

fn centroid(pixels: &[PixelPoint]) -> Option<(f64, f64)> {
    if pixels.is_empty() {
        return None;
    }
    let n = pixels.len() as f64;
    let sx: f64 = pixels.iter().map(|p| p.x as f64).sum();
    let sy: f64 = pixels.iter().map(|p| p.y as f64).sum();
    Some((sx / n, sy / n))
}

/// The pixel nearest the centroid; ties go to the first in row-major order.
pub fn central_pixel(pixels: &[PixelPoint]) -> Option<PixelPoint> {
    let (cx, cy) = centroid(pixels)?;
    let d = |p: &PixelPoint| (p.x as f64 - cx).powi(2) + (p.y as f64 - cy).powi(2);
    pixels.iter().copied().reduce(|a, b| if d(&b) < d(&a) { b } else { a })
}

fn center_distance(pixels: &[PixelPoint], dims: (u32, u32)) -> f64 {
    let (cx, cy) = centroid(pixels).unwrap_or((f64::INFINITY, f64::INFINITY));
    let (mx, my) = (dims.0 as f64 / 2.0, dims.1 as f64 / 2.0);
    (cx - mx).powi(2) + (cy - my).powi(2)
}

fn point_in(p: PixelPoint, native: (u32, u32), attached: (u32, u32)) -> PixelPoint {
    rescale_point(p, native, attached)
}

type Choice = (usize, PixelPoint, (u32, u32));

fn best_visible(script: &OracleScript, part: u16, images: &[(usize, &RgbImage)]) -> Option<Choice> {
    let mut best: Option<(usize, f64, Choice)> = None;
    for &(f, img) in images {
        let px = script.visible_pixels(part, f);
        if px.is_empty() {
            continue;
        }
        let dist = center_distance(px, script.scene().frames[f].dims());
        let better = match &best {
            None => true,
            Some((area, d, (bf, _, _))) => {
                px.len() > *area || (px.len() == *area && (dist < *d || (dist == *d && f < *bf)))
            }
        };
        if better {
            let p = central_pixel(px).expect("non-empty");
            best = Some((px.len(), dist, (f, p, img.dimensions())));
        }
    }
    best.map(|(_, _, c)| c)
}

fn parent_centered(script: &OracleScript, part: u16, images: &[(usize, &RgbImage)]) -> Option<Choice> {
    let parent = script.object(part).parent?;
    let mut best: Option<(f64, Choice)> = None;
    for &(f, img) in images {
        let px = script.object_pixels(parent, f);
        if px.is_empty() {
            continue;
        }
        let dist = center_distance(&px, script.scene().frames[f].dims());
        if best.as_ref().map_or(true, |(d, (bf, _, _))| dist < *d || (dist == *d && f < *bf)) {
            let p = central_pixel(script.visible_pixels(part, f)).or_else(|| central_pixel(&px)).expect("non-empty");
            best = Some((dist, (f, p, img.dimensions())));
        }
    }
    best.map(|(_, c)| c)
}

/// Recovers the highlighted region by diffing the overlay against the frame
/// and checks it against every part called `object`.
fn verify_overlay(script: &OracleScript, f: usize, overlay: &RgbImage, object: &str) -> bool {
    let frame = &script.scene().frames[f].color;
    if frame.dimensions() != overlay.dimensions() {
        return false;
    }
    let w = frame.width();
    let region: Vec<bool> = frame.pixels().zip(overlay.pixels()).map(|(a, b)| a != b).collect();
    let area = region.iter().filter(|&&r| r).count();
    if area == 0 {
        return false;
    }
    let inside = |p: &PixelPoint| region[(p.y * w + p.x) as usize];
    script.parts_in_frame(f).into_iter().any(|p| {
        let obj = script.object(p);
        if !obj.name.eq_ignore_ascii_case(object) {
            return false;
        }
        let part_px = script.visible_pixels(p, f);
        let inter = part_px.iter().filter(|q| inside(q)).count();
        let iou = inter as f64 / (area + part_px.len() - inter) as f64;
        let on_parent = obj.parent.map_or(0, |par| script.object_pixels(par, f).iter().filter(|q| inside(q)).count());
        iou >= VERIFY_MIN_IOU && on_parent as f64 / area as f64 <= VERIFY_MAX_PARENT_FRACTION
    })
}
