//! Point-prompted 2D masks, overlay rendering and overlay verification.

mod http;
mod overlay;
mod rle;

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::BackendError;
use crate::mllm::{self, build_verify_prompt, parse_verdict, ChatBackend, ChatOptions, PixelPoint, TaggedImage, VerificationVerdict};

pub use self::http::{wire, HttpSegBackend, SEG_ROUTE, SEG_URL_ENV};
pub use self::overlay::{render_overlay, DEFAULT_ALPHA, HIGHLIGHT};
pub use self::rle::{BinaryMask, Rle, RleError};

pub const DEFAULT_SEG_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no mask at or above the confidence threshold")]
    EmptyResult,
    #[error("mask is {mask:?} but image is {image:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("prompt point ({x}, {y}) outside {width}x{height} image")]
    PointOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("blend factor {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Rle(#[from] RleError),
}

/// One mask as returned by a segmentation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegCandidate {
    pub rle: Rle,
    pub score: f64,
}

/// A point-prompted segmenter. Implementations must be safe to call concurrently.
pub trait SegBackend: Send + Sync {
    fn segment(&self, image: &RgbImage, points: &[PixelPoint]) -> Result<Vec<SegCandidate>, BackendError>;
}

impl<T: SegBackend + ?Sized> SegBackend for Arc<T> {
    fn segment(&self, image: &RgbImage, points: &[PixelPoint]) -> Result<Vec<SegCandidate>, BackendError> {
        (**self).segment(image, points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask2D {
    pub frame_index: usize,
    pub rle: Rle,
    pub score: f64,
    pub prompt_point: PixelPoint,
}

impl Mask2D {
    pub fn area(&self) -> u64 {
        self.rle.area()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn decode(&self) -> Result<BinaryMask, RleError> {
        self.rle.decode()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedMask2D {
    pub mask: Mask2D,
    pub verdict: VerificationVerdict,
    pub object_name: String,
    /// Raw verifier reply, or why no reply was obtained.
    pub note: Option<String>,
}

impl VerifiedMask2D {
    /// Wraps a mask that bypassed verification.
    pub fn unverified(mask: Mask2D, object_name: &str) -> Self {
        Self { mask, verdict: VerificationVerdict::Yes, object_name: object_name.to_string(), note: None }
    }
}

/// Prompts `backend` with one point and keeps the masks scoring at least
/// `seg_confidence`, best first. Ties keep backend order.
pub fn segment(
    backend: &dyn SegBackend,
    frame_index: usize,
    image: &RgbImage,
    point: PixelPoint,
    seg_confidence: f64,
) -> Result<Vec<Mask2D>, SegError> {
    let (width, height) = image.dimensions();
    if point.x >= width || point.y >= height {
        return Err(SegError::PointOutOfBounds { x: point.x, y: point.y, width, height });
    }
    let candidates = backend.segment(image, &[point])?;
    let mut masks = Vec::new();
    for c in candidates {
        if !(0.0..=1.0).contains(&c.score) {
            return Err(BackendError::Protocol(format!("mask score {} outside [0, 1]", c.score)).into());
        }
        if c.rle.dims() != (width, height) {
            return Err(SegError::DimensionMismatch { image: (width, height), mask: c.rle.dims() });
        }
        c.rle.decode()?;
        if c.score >= seg_confidence {
            masks.push(Mask2D { frame_index, rle: c.rle, score: c.score, prompt_point: point });
        }
    }
    if masks.is_empty() {
        return Err(SegError::EmptyResult);
    }
    masks.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(masks)
}

/// Asks the chat backend whether the highlighted mask shows only `object`.
/// Empty masks and failed calls are answered NO.
pub fn verify_mask(
    chat: &dyn ChatBackend,
    frame: &RgbImage,
    mask: &Mask2D,
    object: &str,
    alpha: f64,
    opts: &ChatOptions,
) -> Result<VerifiedMask2D, SegError> {
    let bits = mask.decode()?;
    let overlay = render_overlay(frame, &bits, alpha)?;
    let object_name = object.trim().to_string();
    let no = |note: String| VerifiedMask2D {
        mask: mask.clone(),
        verdict: VerificationVerdict::No,
        object_name: object_name.clone(),
        note: Some(note),
    };
    if bits.is_empty() {
        return Ok(no("empty mask".into()));
    }
    let req = match build_verify_prompt(&object_name, &TaggedImage::new(mask.frame_index, Arc::new(overlay))) {
        Ok(r) => r.with_options(opts),
        Err(e) => return Ok(no(e.to_string())),
    };
    Ok(match mllm::chat(chat, &req) {
        Ok(text) => VerifiedMask2D {
            mask: mask.clone(),
            verdict: parse_verdict(&text),
            object_name: object_name.clone(),
            note: Some(text),
        },
        Err(e) => no(e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Fixed(Vec<SegCandidate>);

    impl SegBackend for Fixed {
        fn segment(&self, _: &RgbImage, _: &[PixelPoint]) -> Result<Vec<SegCandidate>, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn cand(w: u32, h: u32, px: &[(u32, u32)], score: f64) -> SegCandidate {
        SegCandidate { rle: Rle::encode(&BinaryMask::from_pixels(w, h, px.iter().copied())), score }
    }

    #[test]
    fn threshold_and_ordering() {
        let img = RgbImage::new(4, 4);
        let b = Fixed(vec![cand(4, 4, &[(0, 0)], 0.3), cand(4, 4, &[(1, 1)], 0.6), cand(4, 4, &[(2, 2)], 0.9)]);
        let masks = segment(&b, 7, &img, PixelPoint::new(1, 1), 0.5).unwrap();
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0].score, 0.9);
        assert_eq!(masks[0].frame_index, 7);
        assert_eq!(masks[0].prompt_point, PixelPoint::new(1, 1));
        // Exactly at threshold is kept.
        let b = Fixed(vec![cand(4, 4, &[(0, 0)], 0.5)]);
        assert_eq!(segment(&b, 0, &img, PixelPoint::new(0, 0), 0.5).unwrap().len(), 1);
    }

    #[test]
    fn low_scores_and_nothing_are_empty_results() {
        let img = RgbImage::new(4, 4);
        let b = Fixed(vec![cand(4, 4, &[(0, 0)], 0.3)]);
        assert_eq!(segment(&b, 0, &img, PixelPoint::new(0, 0), 0.5), Err(SegError::EmptyResult));
        assert_eq!(segment(&Fixed(vec![]), 0, &img, PixelPoint::new(0, 0), 0.5), Err(SegError::EmptyResult));
    }

    #[test]
    fn bad_backend_output_rejected() {
        let img = RgbImage::new(4, 4);
        let b = Fixed(vec![cand(3, 4, &[(0, 0)], 0.9)]);
        assert!(matches!(segment(&b, 0, &img, PixelPoint::new(0, 0), 0.5), Err(SegError::DimensionMismatch { .. })));
        let b = Fixed(vec![cand(4, 4, &[(0, 0)], 1.5)]);
        assert!(matches!(segment(&b, 0, &img, PixelPoint::new(0, 0), 0.5), Err(SegError::Backend(_))));
        assert!(matches!(
            segment(&Fixed(vec![]), 0, &img, PixelPoint::new(4, 0), 0.5),
            Err(SegError::PointOutOfBounds { .. })
        ));
    }

    struct Recorder {
        reply: Result<String, BackendError>,
        seen: Mutex<Vec<String>>,
    }

    impl ChatBackend for Recorder {
        fn chat(&self, req: &mllm::ChatRequest) -> Result<String, BackendError> {
            self.seen.lock().unwrap().push(req.prompt_text());
            self.reply.clone()
        }
    }

    fn mask(px: &[(u32, u32)]) -> Mask2D {
        Mask2D {
            frame_index: 3,
            rle: Rle::encode(&BinaryMask::from_pixels(4, 4, px.iter().copied())),
            score: 1.0,
            prompt_point: PixelPoint::new(0, 0),
        }
    }

    #[test]
    fn verification_verdicts() {
        let img = RgbImage::new(4, 4);
        let yes = Recorder { reply: Ok("YES".into()), seen: Mutex::new(vec![]) };
        let v = verify_mask(&yes, &img, &mask(&[(1, 1)]), "knob ", 0.5, &ChatOptions::default()).unwrap();
        assert_eq!(v.verdict, VerificationVerdict::Yes);
        assert_eq!(v.object_name, "knob");
        assert!(yes.seen.lock().unwrap()[0].contains("ONLY knob?"));

        // Empty masks never reach the model.
        let v = verify_mask(&yes, &img, &mask(&[]), "knob", 0.5, &ChatOptions::default()).unwrap();
        assert_eq!(v.verdict, VerificationVerdict::No);
        assert_eq!(yes.seen.lock().unwrap().len(), 1);

        let down = Recorder {
            reply: Err(BackendError::Unavailable { attempts: 3, cause: "refused".into() }),
            seen: Mutex::new(vec![]),
        };
        let v = verify_mask(&down, &img, &mask(&[(1, 1)]), "knob", 0.5, &ChatOptions::default()).unwrap();
        assert_eq!(v.verdict, VerificationVerdict::No);
        assert!(v.note.unwrap().contains("BackendUnavailable"));
    }
}
