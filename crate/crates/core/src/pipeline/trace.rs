use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mllm::{PixelPoint, VerificationVerdict};
use crate::sampler::TemporalWindow;

use super::CoarseCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Fine,
    Segment,
    Verify,
}

/// One backend round trip. Images are summarized by their tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: Stage,
    pub frames: Vec<usize>,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub frame_index: usize,
    pub prompt_point: PixelPoint,
    pub score: f64,
    pub area: u64,
    pub verdict: Option<VerificationVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub coarse_ms: f64,
    pub fine_ms: f64,
    pub stage2_ms: f64,
    pub lifting_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    /// A non-empty 3D mask was produced.
    Ok,
    /// The pipeline ran but nothing survived to the final mask.
    Empty,
    /// A stage failed and the query was downgraded to an empty mask.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub scene_id: String,
    pub query_id: String,
    pub task: String,
    pub status: QueryStatus,
    pub reason: Option<String>,
    pub resolved_object: Option<String>,
    pub candidates: Vec<CoarseCandidate>,
    pub windows: Vec<TemporalWindow>,
    pub fine_frames: Vec<usize>,
    pub per_frame_points: BTreeMap<usize, Vec<PixelPoint>>,
    pub masks: Vec<MaskRecord>,
    pub max_vote: u32,
    pub mask_points: usize,
    pub confidence: f64,
    pub timings: StageTimings,
    pub exchanges: Vec<Exchange>,
}

impl QueryTrace {
    pub fn new(scene_id: &str, query_id: &str, task: &str) -> Self {
        Self {
            scene_id: scene_id.to_string(),
            query_id: query_id.to_string(),
            task: task.to_string(),
            status: QueryStatus::Empty,
            reason: None,
            resolved_object: None,
            candidates: Vec::new(),
            windows: Vec::new(),
            fine_frames: Vec::new(),
            per_frame_points: BTreeMap::new(),
            masks: Vec::new(),
            max_vote: 0,
            mask_points: 0,
            confidence: 0.0,
            timings: StageTimings::default(),
            exchanges: Vec::new(),
        }
    }
}
