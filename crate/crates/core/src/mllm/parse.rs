use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pixel coordinate in the transmitted image: x is the column, y the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

impl PixelPoint {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AffordanceResponse {
    pub functional_object: Option<String>,
    pub frame_index: Option<usize>,
    pub points: Vec<PixelPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("response contains no <affordance> block")]
    ParseFailure,
    #[error("response names no <frame n>")]
    MissingFrameIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VerificationVerdict {
    Yes,
    No,
}

impl VerificationVerdict {
    pub fn is_yes(self) -> bool {
        self == Self::Yes
    }
}

pub type Verdict = VerificationVerdict;

static BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<affordance>(.*?)</affordance>").unwrap());
static NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)functional\s+object\s*:\s*([^;<\n]*)").unwrap());
static FRAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<\s*frame\s+(\d+)\s*>").unwrap());
static POINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\(\s*([-+]?\d+(?:\.\d+)?)\s*,\s*([-+]?\d+(?:\.\d+)?)\s*\)").unwrap()
});
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9_]+").unwrap());

/// Share of the image extent a point may overshoot and still be clamped back.
const OVERSHOOT: f64 = 0.05;

fn coordinate(v: f64, extent: u32) -> Option<u32> {
    if !v.is_finite() || extent == 0 {
        return None;
    }
    let extent_f = extent as f64;
    let slack = OVERSHOOT * extent_f;
    if v < -slack || v > extent_f + slack {
        return None;
    }
    Some((v.floor().max(0.0) as u32).min(extent - 1))
}

/// Extracts the first `<affordance>` block of a model response.
///
/// Coordinates are floored and clamped into `image_dims` when they overshoot
/// by at most 5% of the extent; points further out are dropped.
pub fn parse_affordance(
    raw: &str,
    expect_frame: bool,
    image_dims: (u32, u32),
) -> Result<AffordanceResponse, ParseError> {
    let block = BLOCK.captures(raw).ok_or(ParseError::ParseFailure)?;
    let body = block.get(1).map_or("", |m| m.as_str());

    let functional_object = NAME
        .captures(body)
        .map(|c| c[1].trim().to_lowercase())
        .filter(|n| !n.is_empty());
    let frame_index = FRAME.captures(body).and_then(|c| c[1].parse::<usize>().ok());
    if expect_frame && frame_index.is_none() {
        return Err(ParseError::MissingFrameIndex);
    }
    let points = POINT
        .captures_iter(body)
        .filter_map(|c| {
            let x = c[1].parse::<f64>().ok()?;
            let y = c[2].parse::<f64>().ok()?;
            Some(PixelPoint::new(coordinate(x, image_dims.0)?, coordinate(y, image_dims.1)?))
        })
        .collect();
    Ok(AffordanceResponse { functional_object, frame_index, points })
}

/// Formats a response the way the prompts ask the model to.
pub fn render_affordance(resp: &AffordanceResponse) -> String {
    let mut fields = Vec::new();
    if let Some(name) = &resp.functional_object {
        fields.push(format!("functional object: {name}"));
    }
    if let Some(f) = resp.frame_index {
        fields.push(format!("<frame {f}>: key frame"));
    }
    let points: Vec<String> = resp.points.iter().map(|p| format!("({}, {})", p.x, p.y)).collect();
    if !points.is_empty() {
        fields.push(points.join(" "));
    }
    format!("<affordance> {} </affordance>", fields.join("; "))
}

/// Reads the tag attached to an image, e.g. `<frame 12>:` gives 12.
pub fn parse_frame_tag(tag: &str) -> Option<usize> {
    FRAME.captures(tag).and_then(|c| c[1].parse().ok())
}

/// First standalone YES or NO token (any case) decides; anything else is NO.
pub fn parse_verdict(raw: &str) -> VerificationVerdict {
    for word in WORD.find_iter(raw) {
        let w = word.as_str();
        if w.eq_ignore_ascii_case("yes") {
            return VerificationVerdict::Yes;
        }
        if w.eq_ignore_ascii_case("no") {
            return VerificationVerdict::No;
        }
    }
    VerificationVerdict::No
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_round1_response() {
        let r = parse_affordance(
            "Sure. <affordance> functional object: Knob ; <frame 12>: best view; (310, 142) </affordance>",
            true,
            (512, 384),
        )
        .unwrap();
        assert_eq!(r.functional_object.as_deref(), Some("knob"));
        assert_eq!(r.frame_index, Some(12));
        assert_eq!(r.points, vec![PixelPoint::new(310, 142)]);
    }

    #[test]
    fn missing_block_and_missing_frame() {
        assert_eq!(parse_affordance("the knob at (3, 4)", false, (10, 10)), Err(ParseError::ParseFailure));
        let raw = "<affordance> functional object: knob; (3, 4) </affordance>";
        assert_eq!(parse_affordance(raw, true, (10, 10)), Err(ParseError::MissingFrameIndex));
        assert_eq!(parse_affordance(raw, false, (10, 10)).unwrap().frame_index, None);
    }

    #[test]
    fn overshoot_is_floored_and_clamped() {
        let r = parse_affordance("<affordance> (511.7, 240) </affordance>", false, (512, 384)).unwrap();
        assert_eq!(r.points, vec![PixelPoint::new(511, 240)]);
        // 530 is within 5% of 512; 540 is not.
        let r = parse_affordance("<affordance> (530, 10) (540, 10) (-20, 5) (-30, 5) </affordance>", false, (512, 384))
            .unwrap();
        assert_eq!(r.points, vec![PixelPoint::new(511, 10), PixelPoint::new(0, 5)]);
    }

    #[test]
    fn several_points_and_case_insensitive_tags() {
        let r = parse_affordance("<AFFORDANCE>(1,2) (3.9, 4.1)</Affordance>", false, (10, 10)).unwrap();
        assert_eq!(r.points, vec![PixelPoint::new(1, 2), PixelPoint::new(3, 4)]);
        assert_eq!(r.functional_object, None);
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("YES"), Verdict::Yes);
        assert_eq!(parse_verdict(" yes."), Verdict::Yes);
        assert_eq!(parse_verdict("No, it includes the cabinet. Yes?"), Verdict::No);
        assert_eq!(parse_verdict("Yesterday I saw NO knob"), Verdict::No);
        assert_eq!(parse_verdict("Yesterday"), Verdict::No);
        assert_eq!(parse_verdict(""), Verdict::No);
        assert_eq!(parse_verdict("maybe"), Verdict::No);
    }

    #[test]
    fn frame_tags() {
        assert_eq!(parse_frame_tag("<frame 12>:"), Some(12));
        assert_eq!(parse_frame_tag("frame 12"), None);
    }

    fn name_strategy() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9 _-]{0,20}[a-z0-9]".prop_map(|s| s.trim().to_string())
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            name in proptest::option::of(name_strategy()),
            frame in proptest::option::of(0usize..100_000),
            (w, h, pts) in (1u32..4096, 1u32..4096).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec((0..w, 0..h), 0..5))
            }),
        ) {
            let resp = AffordanceResponse {
                functional_object: name,
                frame_index: frame,
                points: pts.into_iter().map(|(x, y)| PixelPoint::new(x, y)).collect(),
            };
            let parsed = parse_affordance(&render_affordance(&resp), false, (w, h)).unwrap();
            prop_assert_eq!(parsed, resp);
        }

        #[test]
        fn never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512), f in any::<bool>()) {
            let s = String::from_utf8_lossy(&bytes);
            let _ = parse_affordance(&s, f, (64, 48));
            let _ = parse_verdict(&s);
        }

        #[test]
        fn never_panics_on_affordance_shaped_noise(s in "<affordance>[ -~]{0,80}</affordance>", w in 0u32..5, h in 0u32..5) {
            if let Ok(r) = parse_affordance(&s, false, (w, h)) {
                for p in r.points {
                    prop_assert!(p.x < w && p.y < h);
                }
            }
        }
    }
}
