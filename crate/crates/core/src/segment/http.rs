use image::RgbImage;

use super::{Rle, SegBackend, SegCandidate};
use crate::error::BackendError;
use crate::mllm::PixelPoint;
use crate::transport::{join_url, png_base64_encode, JsonClient, RetryPolicy};

pub const SEG_URL_ENV: &str = "FUNCGROUND_SEG_URL";
pub const SEG_ROUTE: &str = "/v1/segment";

/// JSON shapes of the `/v1/segment` contract.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SegWireRequest {
        pub image: String,
        pub points: Vec<WirePoint>,
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
    pub struct WirePoint {
        pub x: u32,
        pub y: u32,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SegWireResponse {
        pub masks: Vec<WireMask>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct WireMask {
        pub rle: WireCounts,
        pub width: u32,
        pub height: u32,
        pub score: f64,
    }

    /// Counts travel as the compact COCO string; plain integer arrays are
    /// accepted too.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(untagged)]
    pub enum WireCounts {
        Compact(String),
        Runs(Vec<u32>),
    }

    impl WireMask {
        pub fn from_candidate(c: &SegCandidate) -> Self {
            Self {
                rle: WireCounts::Compact(c.rle.to_coco_string()),
                width: c.rle.width,
                height: c.rle.height,
                score: c.score,
            }
        }

        pub fn to_candidate(&self) -> Result<SegCandidate, BackendError> {
            let rle = match &self.rle {
                WireCounts::Compact(s) => Rle::from_coco_string(s, self.width, self.height),
                WireCounts::Runs(r) => Rle::from_counts(self.width, self.height, r.clone()),
            }
            .map_err(|e| BackendError::Protocol(format!("mask rle: {e}")))?;
            Ok(SegCandidate { rle, score: self.score })
        }
    }

    pub fn encode_request(image: &RgbImage, points: &[PixelPoint]) -> SegWireRequest {
        SegWireRequest {
            image: png_base64_encode(image),
            points: points.iter().map(|p| WirePoint { x: p.x, y: p.y }).collect(),
        }
    }
}

/// Segmentation backend reached over HTTP.
#[derive(Debug, Clone)]
pub struct HttpSegBackend {
    client: JsonClient,
    url: String,
}

impl HttpSegBackend {
    pub fn new(endpoint: &str) -> Self {
        Self::with_policy(endpoint, RetryPolicy::default())
    }

    pub fn with_policy(endpoint: &str, policy: RetryPolicy) -> Self {
        Self { client: JsonClient::new(policy), url: join_url(endpoint, SEG_ROUTE) }
    }

    /// Endpoint taken from `FUNCGROUND_SEG_URL`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(SEG_URL_ENV).ok().filter(|s| !s.trim().is_empty()).map(|u| Self::new(&u))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl SegBackend for HttpSegBackend {
    fn segment(&self, image: &RgbImage, points: &[PixelPoint]) -> Result<Vec<SegCandidate>, BackendError> {
        let resp: wire::SegWireResponse = self.client.post(&self.url, &wire::encode_request(image, points))?;
        resp.masks.iter().map(wire::WireMask::to_candidate).collect()
    }
}
