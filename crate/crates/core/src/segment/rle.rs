use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RleError {
    #[error("run lengths cover {covered} pixels, mask has {expected}")]
    LengthMismatch { covered: u64, expected: u64 },
    #[error("malformed counts string at byte {0}")]
    BadCounts(usize),
    #[error("negative run length {0}")]
    NegativeRun(i64),
}

/// A row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    pub fn from_pixels(width: u32, height: u32, pixels: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut m = Self::new(width, height);
        for (x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }

    /// Panics when (x, y) is out of bounds.
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) outside {}x{}", self.width, self.height);
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }
}

/// COCO-style run-length encoding: column-major runs alternating between
/// unset and set pixels, starting with unset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rle {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let b = mask.get(x, y);
                if b != current {
                    counts.push(run);
                    run = 0;
                    current = b;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self { width: w, height: h, counts }
    }

    pub fn from_counts(width: u32, height: u32, counts: Vec<u32>) -> Result<Self, RleError> {
        let rle = Self { width, height, counts };
        rle.check()?;
        Ok(rle)
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, counts: vec![width * height] }
    }

    fn check(&self) -> Result<(), RleError> {
        let covered: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = self.width as u64 * self.height as u64;
        if covered != expected {
            return Err(RleError::LengthMismatch { covered, expected });
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<BinaryMask, RleError> {
        self.check()?;
        let mut m = BinaryMask::new(self.width, self.height);
        for (x, y) in self.pixels() {
            m.set(x, y, true);
        }
        Ok(m)
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Set pixels in column-major order, read straight from the runs.
    /// Assumes the counts are consistent with the dimensions.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let h = self.height.max(1) as u64;
        let mut start = 0u64;
        self.counts.iter().enumerate().flat_map(move |(i, &c)| {
            let begin = start;
            start += c as u64;
            let range = if i % 2 == 1 { begin..begin + c as u64 } else { 0..0 };
            range.map(move |p| ((p / h) as u32, (p % h) as u32))
        })
    }

    /// Compact counts string as produced by the COCO mask API.
    pub fn to_coco_string(&self) -> String {
        let mut s = String::new();
        for i in 0..self.counts.len() {
            let mut x = self.counts[i] as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let mut c = x & 0x1f;
                x >>= 5;
                let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    c |= 0x20;
                }
                s.push((c as u8 + 48) as char);
                if !more {
                    break;
                }
            }
        }
        s
    }

    pub fn from_coco_string(counts: &str, width: u32, height: u32) -> Result<Self, RleError> {
        let bytes = counts.as_bytes();
        let mut out: Vec<u32> = Vec::new();
        let mut p = 0;
        while p < bytes.len() {
            let mut x: i64 = 0;
            let mut k = 0;
            loop {
                let Some(&b) = bytes.get(p) else { return Err(RleError::BadCounts(p)) };
                if !(48..48 + 64).contains(&b) || k > 11 {
                    return Err(RleError::BadCounts(p));
                }
                let c = (b - 48) as i64;
                x |= (c & 0x1f) << (5 * k);
                p += 1;
                k += 1;
                if c & 0x20 == 0 {
                    if c & 0x10 != 0 {
                        x |= -1i64 << (5 * k);
                    }
                    break;
                }
            }
            if out.len() > 2 {
                x += out[out.len() - 2] as i64;
            }
            if x < 0 || x > u32::MAX as i64 {
                return Err(RleError::NegativeRun(x));
            }
            out.push(x as u32);
        }
        Self::from_counts(width, height, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn column_major_runs_start_with_zeros() {
        // 3 wide, 2 tall; set pixels (0,1) and (1,0).
        let m = BinaryMask::from_pixels(3, 2, [(0, 1), (1, 0)]);
        let rle = Rle::encode(&m);
        assert_eq!(rle.counts, vec![1, 2, 3]);
        assert_eq!(rle.area(), 2);
        assert_eq!(rle.pixels().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
        let full = BinaryMask::from_fn(2, 2, |_, _| true);
        assert_eq!(Rle::encode(&full).counts, vec![0, 4]);
        assert_eq!(Rle::encode(&BinaryMask::new(2, 2)).counts, vec![4]);
    }

    #[test]
    fn coco_strings_match_reference_encoder() {
        // Produced by pycocotools.mask.encode on the same masks.
        let rle = Rle { width: 3, height: 2, counts: vec![1, 2, 3] };
        assert_eq!(rle.to_coco_string(), "123");
        let rle = Rle { width: 10, height: 10, counts: vec![12, 5, 30, 3, 50] };
        assert_eq!(rle.to_coco_string(), "<5n0Nd0");
        assert_eq!(Rle::from_coco_string("<5n0Nd0", 10, 10).unwrap(), rle);
        let cases: [(&[u32], u32, &str); 3] = [
            (&[0, 4], 4, "04"),
            (&[100, 1, 1, 1000, 2, 30, 4], 1138, "T311Wo01fQO2"),
            (&[7, 40000, 3], 40010, "7PRW13"),
        ];
        for (counts, h, expected) in cases {
            let rle = Rle { width: 1, height: h, counts: counts.to_vec() };
            assert_eq!(rle.to_coco_string(), expected);
            assert_eq!(Rle::from_coco_string(expected, 1, h).unwrap(), rle);
        }
    }

    #[test]
    fn malformed_counts_rejected() {
        assert_eq!(Rle::from_coco_string("1", 3, 2), Err(RleError::LengthMismatch { covered: 1, expected: 6 }));
        assert!(matches!(Rle::from_coco_string("\u{7f}", 1, 1), Err(RleError::BadCounts(0))));
        assert!(matches!(Rle::from_coco_string("h", 1, 1), Err(RleError::BadCounts(1))));
        assert!(Rle { width: 2, height: 2, counts: vec![1, 1] }.decode().is_err());
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
        (0u32..40, 0u32..40, 0.0f64..1.0).prop_flat_map(|(w, h, density)| {
            proptest::collection::vec(proptest::bool::weighted(density.clamp(0.01, 0.99)), (w * h) as usize)
                .prop_map(move |bits| BinaryMask { width: w, height: h, bits })
        })
    }

    proptest! {
        #[test]
        fn rle_round_trip(m in mask_strategy()) {
            let rle = Rle::encode(&m);
            prop_assert_eq!(rle.area() as usize, m.area());
            prop_assert_eq!(rle.decode().unwrap(), m.clone());
            let s = rle.to_coco_string();
            let back = Rle::from_coco_string(&s, m.width(), m.height()).unwrap();
            prop_assert_eq!(back.decode().unwrap(), m);
        }

        #[test]
        fn coco_string_round_trip_with_long_runs(counts in proptest::collection::vec(0u32..5_000_000, 1..12)) {
            let total: u64 = counts.iter().map(|&c| c as u64).sum();
            prop_assume!(total <= u32::MAX as u64 && total > 0);
            let rle = Rle { width: 1, height: total as u32, counts };
            prop_assert_eq!(Rle::from_coco_string(&rle.to_coco_string(), 1, total as u32).unwrap(), rle);
        }

        #[test]
        fn counts_decoder_never_panics(s in "[ -~]{0,40}", w in 0u32..10, h in 0u32..10) {
            let _ = Rle::from_coco_string(&s, w, h);
        }
    }
}
