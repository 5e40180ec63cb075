use serde::{Deserialize, Serialize};

use crate::lifting::{LiftingConfig, DEFAULT_TAU};
use crate::mllm::ChatOptions;
use crate::sampler::SamplingConfig;
use crate::segment::{DEFAULT_ALPHA, DEFAULT_SEG_CONFIDENCE};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sampling: SamplingConfig,
    /// Masks scoring below this are discarded.
    pub seg_confidence: f64,
    /// Consensus threshold on normalized votes.
    pub tau: f64,
    /// Run all `K` coarse iterations; otherwise only one.
    pub enable_multisampling: bool,
    /// Query every frame of the window around each coarse pick; otherwise
    /// only the picked frame.
    pub enable_temporal_window: bool,
    pub enable_verification: bool,
    /// Re-localize at native resolution; otherwise the coarse points are
    /// segmented directly.
    pub enable_two_stage: bool,
    /// Upper bound on in-flight backend calls within a query.
    pub max_concurrency: usize,
    /// Cap on distinct frames queried in the fine stage.
    pub max_fine_frames: usize,
    pub overlay_alpha: f64,
    pub lifting: LiftingConfig,
    pub chat: ChatOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            seg_confidence: DEFAULT_SEG_CONFIDENCE,
            tau: DEFAULT_TAU,
            enable_multisampling: true,
            enable_temporal_window: true,
            enable_verification: true,
            enable_two_stage: true,
            max_concurrency: 4,
            max_fine_frames: 256,
            overlay_alpha: DEFAULT_ALPHA,
            lifting: LiftingConfig::default(),
            chat: ChatOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        self.sampling.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.seg_confidence) {
            return bad("seg_confidence must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.overlay_alpha) {
            return bad("overlay_alpha must lie in [0, 1]");
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be >= 1");
        }
        if self.max_fine_frames == 0 {
            return bad("max_fine_frames must be >= 1");
        }
        if let Some(e) = self.lifting.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return bad("lifting.epsilon must be a non-negative number");
            }
        }
        Ok(())
    }

    /// Sampling parameters actually used: one iteration when multi-sampling is off.
    pub fn effective_sampling(&self) -> SamplingConfig {
        let mut s = self.sampling.clone();
        if !self.enable_multisampling {
            s.iterations = 1;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.sampling.frames_per_iteration, 64);
        assert_eq!(c.sampling.iterations, 4);
        assert_eq!(c.sampling.coarse_resolution, (512, 384));
        assert_eq!((c.tau, c.seg_confidence, c.overlay_alpha), (0.7, 0.5, 0.5));
        assert!(c.enable_multisampling && c.enable_temporal_window && c.enable_verification && c.enable_two_stage);
        assert_eq!(c.max_concurrency, 4);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_out_of_range_values() {
        for tau in [0.0, -0.1, 1.01, f64::NAN] {
            let c = PipelineConfig { tau, ..Default::default() };
            assert!(c.validate().is_err(), "tau {tau}");
        }
        assert!(PipelineConfig { tau: 1.0, ..Default::default() }.validate().is_ok());
        assert!(PipelineConfig { max_concurrency: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn multisampling_switch() {
        let c = PipelineConfig { enable_multisampling: false, ..Default::default() };
        assert_eq!(c.effective_sampling().iterations, 1);
        assert_eq!(PipelineConfig::default().effective_sampling().iterations, 4);
    }

    #[test]
    fn partial_json_and_unknown_fields() {
        let c: PipelineConfig = serde_json::from_str(r#"{"tau": 0.5, "sampling": {"iterations": 2}}"#).unwrap();
        assert_eq!(c.tau, 0.5);
        assert_eq!(c.sampling.iterations, 2);
        assert_eq!(c.sampling.frames_per_iteration, 64);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"taux": 0.5}"#).is_err());
    }
}
