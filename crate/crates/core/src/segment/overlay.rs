use image::{Rgb, RgbImage};

use super::{BinaryMask, SegError};

pub const HIGHLIGHT: Rgb<u8> = Rgb([255, 0, 0]);
pub const DEFAULT_ALPHA: f64 = 0.5;

fn blend(p: u8, c: u8, alpha: f64) -> u8 {
    let v = (1.0 - alpha) * p as f64 + alpha * c as f64;
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Alpha-blends the highlight color over the masked pixels, rounding half up.
pub fn render_overlay(frame: &RgbImage, mask: &BinaryMask, alpha: f64) -> Result<RgbImage, SegError> {
    if frame.dimensions() != mask.dims() {
        return Err(SegError::DimensionMismatch { image: frame.dimensions(), mask: mask.dims() });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SegError::InvalidAlpha(alpha));
    }
    let mut out = frame.clone();
    for (x, y) in mask.pixels() {
        let p = out.get_pixel_mut(x, y);
        for ch in 0..3 {
            p.0[ch] = blend(p.0[ch], HIGHLIGHT.0[ch], alpha);
        }
    }
    Ok(out)
}
