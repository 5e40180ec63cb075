//! Coarse multi-offset frame sampling and fine temporal windows.
//!
//! Iteration `k` of the coarse stage draws `N` frames from a video of `L`
//! frames at
//!
//! ```text
//! j_i = floor((i - 1) * L / N + k * L / (K * N)),   i = 1..N
//! ```
//!
//! clamped into `[0, L - 1]`. The fine stage takes every frame whose
//! timestamp lies within `±Δt/2` of a candidate, `Δt = t_total / (N - 1)`.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack, in seconds, on the inclusive window boundary so that
/// frames sitting exactly on `±Δt/2` survive float rounding.
pub const WINDOW_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OffsetBase {
    /// Offsets `0..K-1`; iteration 1 is plain uniform sampling.
    Zero,
    /// Offsets `1..K`.
    #[default]
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Frames per coarse iteration (N).
    pub frames_per_iteration: usize,
    /// Number of coarse iterations (K).
    pub iterations: usize,
    /// Round-1 image size as `(width, height)`.
    pub coarse_resolution: (u32, u32),
    pub offset_base: OffsetBase,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            frames_per_iteration: 64,
            iterations: 4,
            coarse_resolution: (512, 384),
            offset_base: OffsetBase::One,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.frames_per_iteration == 0 {
            return Err(SamplingError::InvalidConfig("frames_per_iteration must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(SamplingError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.coarse_resolution.0 == 0 || self.coarse_resolution.1 == 0 {
            return Err(SamplingError::InvalidConfig("coarse_resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("iteration {k} outside 1..={max}")]
    InvalidIteration { k: usize, max: usize },
    #[error("video has no frames")]
    EmptyVideo,
    #[error("frame index {index} outside 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SamplingSchedule {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Exactly `N` frame indices, non-decreasing. Duplicates are kept.
    pub indices: Vec<usize>,
}

/// Frame indices for coarse iteration `k` (1-based) over `frame_count` frames.
pub fn coarse_schedule(
    frame_count: usize,
    cfg: &SamplingConfig,
    k: usize,
) -> Result<SamplingSchedule, SamplingError> {
    cfg.validate()?;
    if frame_count == 0 {
        return Err(SamplingError::EmptyVideo);
    }
    let iterations = cfg.iterations;
    if k == 0 || k > iterations {
        return Err(SamplingError::InvalidIteration { k, max: iterations });
    }
    let offset = match cfg.offset_base {
        OffsetBase::One => k,
        OffsetBase::Zero => k - 1,
    } as u128;
    let (l, n, kk) = (frame_count as u128, cfg.frames_per_iteration as u128, iterations as u128);
    let last = frame_count - 1;
    // (i-1)L/N + kL/(KN) = ((i-1)LK + kL) / (KN), all terms non-negative.
    let indices = (0..n)
        .map(|i0| {
            let raw = (i0 * l * kk + offset * l) / (kk * n);
            (raw.min(last as u128)) as usize
        })
        .collect();
    Ok(SamplingSchedule { iteration: k, indices })
}

/// One schedule per iteration, in order.
pub fn all_schedules(
    frame_count: usize,
    cfg: &SamplingConfig,
) -> Result<Vec<SamplingSchedule>, SamplingError> {
    (1..=cfg.iterations).map(|k| coarse_schedule(frame_count, cfg, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalWindow {
    pub source_iteration: Option<usize>,
    pub center_frame: usize,
    pub frame_indices: RangeInclusive<usize>,
    /// `Δt / 2`; zero for the degenerate single-frame window.
    pub half_span_seconds: f64,
}

impl TemporalWindow {
    pub fn single(center: usize) -> Self {
        Self {
            source_iteration: None,
            center_frame: center,
            frame_indices: center..=center,
            half_span_seconds: 0.0,
        }
    }

    pub fn with_iteration(mut self, k: usize) -> Self {
        self.source_iteration = Some(k);
        self
    }

    pub fn len(&self) -> usize {
        self.frame_indices.end() - self.frame_indices.start() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frame-count radius implied by the timestamp rule.
    pub fn radius_frames(&self) -> usize {
        (self.center_frame - self.frame_indices.start()).max(self.frame_indices.end() - self.center_frame)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.frame_indices.clone()
    }
}

/// Dense window around `center`: all frames within `±Δt/2` seconds of it,
/// where `Δt = (t_last - t_first) / (N - 1)`. Timestamps must be sorted.
pub fn temporal_window(
    timestamps: &[f64],
    center: usize,
    cfg: &SamplingConfig,
) -> Result<TemporalWindow, SamplingError> {
    if center >= timestamps.len() {
        return Err(SamplingError::IndexOutOfRange { index: center, len: timestamps.len() });
    }
    let n = cfg.frames_per_iteration;
    if n <= 1 || timestamps.len() == 1 {
        return Ok(TemporalWindow::single(center));
    }
    let total = timestamps[timestamps.len() - 1] - timestamps[0];
    let half = total / (n - 1) as f64 / 2.0;
    let tc = timestamps[center];
    let limit = half + WINDOW_TOLERANCE_S;
    let start = timestamps[..center].partition_point(|&t| tc - t > limit);
    let end = center + timestamps[center..].partition_point(|&t| t - tc <= limit) - 1;
    Ok(TemporalWindow {
        source_iteration: None,
        center_frame: center,
        frame_indices: start..=end,
        half_span_seconds: half,
    })
}
