use std::collections::HashMap;
use std::sync::Arc;

use image::RgbImage;

use crate::error::BackendError;
use crate::mllm::PixelPoint;
use crate::segment::{BinaryMask, Rle, SegBackend, SegCandidate};

use super::script::OracleScript;

/// Segmentation backend answering from the generator's ground truth.
///
/// A prompt inside (or within one pixel of) the convex hull of a part's
/// visible pixels returns exactly those pixels. With `oversegment_rate > 0`,
/// a deterministic hash of `(seed, frame, x, y)` selects calls that return
/// the part merged with its parent object instead.
pub struct OracleSegmenter {
    scripts: Vec<Arc<OracleScript>>,
    oversegment_rate: f64,
    seed: u64,
    by_fingerprint: HashMap<u64, Vec<(usize, usize)>>,
}

impl OracleSegmenter {
    pub fn new(scripts: Vec<Arc<OracleScript>>) -> Self {
        let mut by_fingerprint: HashMap<u64, Vec<(usize, usize)>> = HashMap::new();
        for (s, script) in scripts.iter().enumerate() {
            for (f, frame) in script.scene().frames.iter().enumerate() {
                by_fingerprint.entry(fingerprint(&frame.color)).or_default().push((s, f));
            }
        }
        Self { scripts, oversegment_rate: 0.0, seed: 0, by_fingerprint }
    }

    pub fn with_oversegmentation(mut self, rate: f64, seed: u64) -> Self {
        self.oversegment_rate = rate.clamp(0.0, 1.0);
        self.seed = seed;
        self
    }

    /// The script and frame whose color image is exactly `image`.
    pub fn locate(&self, image: &RgbImage) -> Option<(&OracleScript, usize)> {
        let hits = self.by_fingerprint.get(&fingerprint(image))?;
        hits.iter()
            .find(|&&(s, f)| *self.scripts[s].scene().frames[f].color == *image)
            .map(|&(s, f)| (self.scripts[s].as_ref(), f))
    }

    /// Whether the call keyed by `(frame, point)` over-segments.
    pub fn oversegments(&self, frame: usize, p: PixelPoint) -> bool {
        if self.oversegment_rate <= 0.0 {
            return false;
        }
        let h = splitmix(splitmix(splitmix(self.seed ^ frame as u64) ^ p.x as u64) ^ p.y as u64);
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.oversegment_rate
    }
}

impl SegBackend for OracleSegmenter {
    fn segment(&self, image: &RgbImage, points: &[PixelPoint]) -> Result<Vec<SegCandidate>, BackendError> {
        let Some(&p) = points.first() else { return Ok(Vec::new()) };
        let (w, h) = image.dimensions();
        if p.x >= w || p.y >= h {
            return Err(BackendError::Status { status: 400, body: format!("point ({}, {}) outside image", p.x, p.y) });
        }
        let Some((script, f)) = self.locate(image) else { return Ok(Vec::new()) };

        let mut best: Option<(f64, u16)> = None;
        for part in script.parts_in_frame(f) {
            let d = hull_distance(script.visible_pixels(part, f), p);
            if d <= 1.0 && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, part));
            }
        }
        let Some((_, part)) = best else { return Ok(Vec::new()) };
        let mut pixels = script.visible_pixels(part, f).to_vec();
        if self.oversegments(f, p) {
            if let Some(parent) = script.object(part).parent {
                pixels.extend(script.object_pixels(parent, f));
            }
        }
        let mask = BinaryMask::from_pixels(w, h, pixels.iter().map(|q| (q.x, q.y)));
        Ok(vec![SegCandidate { rle: Rle::encode(&mask), score: 1.0 }])
    }
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the dimensions and a strided sample of the pixel bytes.
fn fingerprint(img: &RgbImage) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for b in img.width().to_le_bytes().into_iter().chain(img.height().to_le_bytes()) {
        eat(b);
    }
    for &b in img.as_raw().iter().step_by(31) {
        eat(b);
    }
    h
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull in counter-clockwise order (monotone chain), without
/// collinear points.
fn convex_hull(pixels: &[PixelPoint]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = pixels.iter().map(|p| (p.x as i64, p.y as i64)).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: (f64, f64), a: (i64, i64), b: (i64, i64)) -> f64 {
    let (ax, ay, bx, by) = (a.0 as f64, a.1 as f64, b.0 as f64, b.1 as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0) };
    ((p.0 - ax - t * dx).powi(2) + (p.1 - ay - t * dy).powi(2)).sqrt()
}

/// Distance from `p` to the convex hull of `pixels` (0 inside, infinity
/// for an empty set).
pub fn hull_distance(pixels: &[PixelPoint], p: PixelPoint) -> f64 {
    let hull = convex_hull(pixels);
    let q = (p.x as i64, p.y as i64);
    let qf = (q.0 as f64, q.1 as f64);
    match hull.len() {
        0 => f64::INFINITY,
        1 => segment_distance(qf, hull[0], hull[0]),
        2 => segment_distance(qf, hull[0], hull[1]),
        n => {
            if (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], q) >= 0) {
                return 0.0;
            }
            (0..n).map(|i| segment_distance(qf, hull[i], hull[(i + 1) % n])).fold(f64::INFINITY, f64::min)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(v: &[(u32, u32)]) -> Vec<PixelPoint> {
        v.iter().map(|&(x, y)| PixelPoint::new(x, y)).collect()
    }

    #[test]
    fn hull_of_square_with_interior() {
        let pts = px(&[(0, 0), (4, 0), (4, 4), (0, 4), (2, 2), (2, 0)]);
        assert_eq!(convex_hull(&pts).len(), 4);
        assert_eq!(hull_distance(&pts, PixelPoint::new(3, 1)), 0.0);
        assert_eq!(hull_distance(&pts, PixelPoint::new(5, 2)), 1.0);
        assert!(hull_distance(&pts, PixelPoint::new(6, 6)) > 1.0);
    }

    #[test]
    fn degenerate_hulls() {
        assert_eq!(hull_distance(&[], PixelPoint::new(0, 0)), f64::INFINITY);
        assert_eq!(hull_distance(&px(&[(3, 3)]), PixelPoint::new(3, 4)), 1.0);
        let line = px(&[(0, 0), (5, 0), (2, 0)]);
        assert_eq!(hull_distance(&line, PixelPoint::new(3, 0)), 0.0);
        assert_eq!(hull_distance(&line, PixelPoint::new(3, 1)), 1.0);
    }

    proptest! {
        #[test]
        fn every_input_pixel_is_inside_its_hull(v in proptest::collection::vec((0u32..50, 0u32..50), 1..40)) {
            let pts = px(&v);
            for p in &pts {
                prop_assert!(hull_distance(&pts, *p) <= 1e-9);
            }
        }
    }

    #[test]
    fn oversegmentation_rate_is_respected() {
        let seg = OracleSegmenter::new(Vec::new()).with_oversegmentation(0.3, 42);
        let n = 20_000;
        let hits = (0..n).filter(|&i| seg.oversegments(i % 97, PixelPoint::new(i as u32, (i / 97) as u32))).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
        let same = OracleSegmenter::new(Vec::new()).with_oversegmentation(0.3, 42);
        assert_eq!(seg.oversegments(5, PixelPoint::new(1, 2)), same.oversegments(5, PixelPoint::new(1, 2)));
        assert!(!OracleSegmenter::new(Vec::new()).oversegments(5, PixelPoint::new(1, 2)));
    }
}
