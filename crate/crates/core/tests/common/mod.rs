#![allow(dead_code)]

use std::sync::Arc;

use funcground::eval::iou;
use funcground::pipeline::{Backends, Pipeline, PipelineConfig, QueryOutcome, SceneContext};
use funcground::synth::{generate, KeyFramePolicy, OracleChat, OracleSegmenter, SynthScene, SynthSpec};

/// Orbit scene from `seed` with a shortened trajectory.
pub fn orbit(seed: u64, n_frames: usize) -> SynthScene {
    let mut spec = SynthSpec::random(seed);
    spec.n_frames = n_frames;
    generate(&spec).expect("generated scene")
}

pub fn oracle_backends(scenes: &[SynthScene], oversegment_rate: f64, policy: KeyFramePolicy) -> Backends {
    let scripts: Vec<_> = scenes.iter().map(|s| Arc::clone(&s.script)).collect();
    Backends::new(
        Arc::new(OracleChat::new(scripts.clone()).with_policy(policy)),
        Arc::new(OracleSegmenter::new(scripts).with_oversegmentation(oversegment_rate, 17)),
    )
}

pub fn run_all(scenes: &[SynthScene], cfg: &PipelineConfig, backends: Backends) -> Vec<Vec<QueryOutcome>> {
    let pipeline = Pipeline::new(cfg.clone(), backends).expect("valid config");
    scenes
        .iter()
        .map(|s| pipeline.run_scene(&SceneContext::new(Arc::clone(&s.scene), cfg), 1))
        .collect()
}

pub fn ious(scenes: &[SynthScene], outcomes: &[Vec<QueryOutcome>]) -> Vec<f64> {
    scenes
        .iter()
        .zip(outcomes)
        .flat_map(|(s, outs)| {
            s.scene.queries.iter().zip(outs).map(|(q, o)| iou(&o.mask.point_ids, q.gt_mask.as_deref().unwrap()))
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
