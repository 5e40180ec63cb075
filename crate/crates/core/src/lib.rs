//! Task-driven grounding of functional parts in posed RGB-D scans.
//!
//! A task description is resolved to a small functional element (a knob, a
//! handle, a switch) by asking a vision-chat model over sampled video frames,
//! segmenting the answer in 2D, verifying each mask, and voting the verified
//! pixels onto the scene point cloud.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod lifting;
pub mod mllm;
pub mod pipeline;
pub mod ply;
pub mod sampler;
pub mod scene;
pub mod scene_io;
pub mod segment;
pub mod server;
pub mod synth;
pub mod transport;

pub use error::{BackendError, SceneError};
pub use geometry::{CameraModel, Pose, Vec3};
pub use lifting::{LiftingConfig, Mask3D, PointIndex, VoteHeatmap};
pub use mllm::{ChatBackend, ChatRequest, PixelPoint, VerificationVerdict};
pub use sampler::{SamplingConfig, TemporalWindow};
pub use scene::{Frame, PointCloud, Scene, TaskQuery};
pub use segment::{BinaryMask, Mask2D, Rle, SegBackend, VerifiedMask2D};
pub use eval::{EvalReport, EvalRecord};
pub use pipeline::{Backends, Pipeline, PipelineConfig, SceneContext};
