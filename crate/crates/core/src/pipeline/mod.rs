//! Two-stage grounding: coarse frame selection, fine re-localization,
//! segmentation with verification, and lifting to a 3D mask.

mod ablation;
mod coarse;
mod config;
mod fine;
mod stage2;
mod trace;

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::lifting::{accumulate_votes, consensus, LiftError, LiftingContext, Mask3D};
use crate::mllm::ChatBackend;
use crate::scene::{Scene, TaskQuery};
use crate::segment::{SegBackend, VerifiedMask2D};

pub use self::ablation::{ablation_grid, default_grid, evaluate_outcomes, AblationCell};
pub use self::coarse::{
    coarse_iterations, require_valid, rescale_point, resize_frame, resolve_object_name, run_coarse, CoarseCache,
    CoarseCandidate,
};
pub use self::config::PipelineConfig;
pub use self::fine::{candidate_windows, coarse_points, fine_frame_plan, run_fine, FramePoints};
pub use self::stage2::{run_stage2, Stage2Output};
pub use self::trace::{Exchange, MaskRecord, QueryStatus, QueryTrace, Stage, StageTimings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no coarse iteration returned a valid frame ({})", reasons.join("; "))]
    AllIterationsInvalid { reasons: Vec<String> },
    #[error("no valid coarse candidate names a functional object")]
    NoValidCandidates,
    #[error("fine stage produced no points ({})", reasons.join("; "))]
    FineStageEmpty { reasons: Vec<String> },
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error("evaluation: {0}")]
    Eval(String),
}

/// The two model services a pipeline talks to.
#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatBackend>,
    pub seg: Arc<dyn SegBackend>,
}

impl Backends {
    pub fn new(chat: Arc<dyn ChatBackend>, seg: Arc<dyn SegBackend>) -> Self {
        Self { chat, seg }
    }
}

/// A loaded scene with the per-scene state shared by its queries.
pub struct SceneContext {
    pub scene: Arc<Scene>,
    pub lifting: LiftingContext,
    pub coarse: CoarseCache,
}

impl SceneContext {
    pub fn new(scene: Arc<Scene>, cfg: &PipelineConfig) -> Self {
        let lifting = LiftingContext::new(&scene, &cfg.lifting);
        let coarse = CoarseCache::new(cfg.sampling.coarse_resolution);
        Self { scene, lifting, coarse }
    }
}

#[derive(Debug, Clone)]
pub struct GroundingResult {
    pub query_id: String,
    pub resolved_object: Option<String>,
    pub per_frame_points: FramePoints,
    pub verified_masks: Vec<VerifiedMask2D>,
    pub trace: QueryTrace,
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub result: GroundingResult,
    pub mask: Mask3D,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    backends: Backends,
    pool: rayon::ThreadPool,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, backends: Backends) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.max_concurrency)
            .thread_name(|i| format!("funcground-{i}"))
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self { cfg, backends, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Grounds one query. Stage failures never escape: they produce an empty
    /// mask and a trace explaining why.
    pub fn run_query(&self, ctx: &SceneContext, query: &TaskQuery) -> QueryOutcome {
        let start = Instant::now();
        let mut trace = QueryTrace::new(&ctx.scene.id, &query.id, &query.text);
        let mut log = Vec::new();
        let mut per_frame_points = FramePoints::new();
        let mut verified = Vec::new();
        let result = self.pool.install(|| {
            self.stages(ctx, query, &mut trace, &mut log, &mut per_frame_points, &mut verified)
        });
        let mask = match result {
            Ok(m) => {
                trace.status = if m.is_empty() { QueryStatus::Empty } else { QueryStatus::Ok };
                if m.is_empty() {
                    trace.reason = Some(if verified.is_empty() {
                        "no mask survived segmentation and verification".into()
                    } else {
                        "no point passed the consensus threshold".into()
                    });
                }
                m
            }
            Err(e) => {
                tracing::info!(scene = %ctx.scene.id, query = %query.id, error = %e, "query downgraded to empty mask");
                trace.status = QueryStatus::Failed;
                trace.reason = Some(e.to_string());
                Mask3D::empty()
            }
        };
        trace.exchanges = log;
        trace.mask_points = mask.point_ids.len();
        trace.confidence = mask.confidence;
        trace.timings.total_ms = ms(start);
        QueryOutcome {
            result: GroundingResult {
                query_id: query.id.clone(),
                resolved_object: trace.resolved_object.clone(),
                per_frame_points,
                verified_masks: verified,
                trace,
            },
            mask,
        }
    }

    fn stages(
        &self,
        ctx: &SceneContext,
        query: &TaskQuery,
        trace: &mut QueryTrace,
        log: &mut Vec<Exchange>,
        points_out: &mut FramePoints,
        verified_out: &mut Vec<VerifiedMask2D>,
    ) -> Result<Mask3D, PipelineError> {
        let cfg = &self.cfg;
        let chat = self.backends.chat.as_ref();

        let t = Instant::now();
        let candidates = coarse_iterations(ctx, query, cfg, chat, log)?;
        trace.candidates = candidates.clone();
        trace.timings.coarse_ms = ms(t);
        require_valid(&candidates)?;
        let object = resolve_object_name(&candidates)?;
        trace.resolved_object = Some(object.clone());

        let t = Instant::now();
        let points = if cfg.enable_two_stage {
            let windows = candidate_windows(ctx, &candidates, cfg)?;
            let plan = fine_frame_plan(&windows, &candidates, &object, cfg.max_fine_frames);
            trace.windows = windows;
            trace.fine_frames = plan.iter().map(|p| p.0).collect();
            run_fine(ctx, query, &plan, cfg, chat, log)
        } else {
            coarse_points(ctx, &candidates, cfg)
        };
        trace.timings.fine_ms = ms(t);
        let points = points?;
        trace.per_frame_points = points.clone();
        *points_out = points;

        let t = Instant::now();
        let stage2 = run_stage2(ctx, points_out, &object, cfg, chat, self.backends.seg.as_ref(), log);
        trace.masks = stage2.records;
        trace.timings.stage2_ms = ms(t);
        *verified_out = stage2.accepted;

        let t = Instant::now();
        let lifting = match cfg.lifting.epsilon {
            Some(e) if e != ctx.lifting.epsilon => ctx.lifting.with_epsilon(e),
            _ => ctx.lifting.clone(),
        };
        let heat = accumulate_votes(&ctx.scene, verified_out, &lifting, &cfg.lifting)?;
        let mask = consensus(&heat, cfg.tau);
        trace.max_vote = heat.max_vote();
        trace.timings.lifting_ms = ms(t);
        Ok(mask)
    }

    /// Runs every query of a scene, `parallel_queries` at a time, returning
    /// outcomes in query order.
    pub fn run_scene(&self, ctx: &SceneContext, parallel_queries: usize) -> Vec<QueryOutcome> {
        let queries = &ctx.scene.queries;
        if parallel_queries <= 1 {
            return queries.iter().map(|q| self.run_query(ctx, q)).collect();
        }
        let outer = rayon::ThreadPoolBuilder::new().num_threads(parallel_queries).build();
        match outer {
            Ok(pool) => pool.install(|| {
                use rayon::prelude::*;
                queries.par_iter().map(|q| self.run_query(ctx, q)).collect()
            }),
            Err(_) => queries.iter().map(|q| self.run_query(ctx, q)).collect(),
        }
    }
}
