use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use funcground::eval::config_fingerprint;
use funcground::pipeline::{QueryStatus, StageTimings};
use funcground::scene_io::format_ids;
use funcground::{Pipeline, PipelineConfig, SceneContext};
use serde::{Deserialize, Serialize};

use crate::config::{BackendChoice, Settings};
use crate::scenes;

pub const SUMMARY_FILE: &str = "summary.json";

pub fn mask_file(out: &Path, scene_id: &str, query_id: &str) -> PathBuf {
    out.join(scene_id).join(format!("{query_id}.mask.ids"))
}

fn trace_file(dir: &Path, scene_id: &str, query_id: &str) -> PathBuf {
    dir.join(scene_id).join(format!("{query_id}.trace.json"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuerySummary {
    pub query_id: String,
    pub status: QueryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub mask_points: usize,
    pub confidence: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub path: PathBuf,
    pub load_ms: f64,
    pub wall_ms: f64,
    /// Per-stage time summed over the scene's queries.
    pub stage_ms: StageTimings,
    pub queries: Vec<QuerySummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub backend: String,
    pub config_fingerprint: String,
    pub config: PipelineConfig,
    pub wall_ms: f64,
    pub queries: usize,
    pub ok: usize,
    pub empty: usize,
    pub failed: usize,
    pub scenes: Vec<SceneSummary>,
}

impl RunSummary {
    pub fn load(results: &Path) -> Result<Self> {
        let path = results.join(SUMMARY_FILE);
        let text = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn add(total: &mut StageTimings, t: &StageTimings) {
    total.coarse_ms += t.coarse_ms;
    total.fine_ms += t.fine_ms;
    total.stage2_ms += t.stage2_ms;
    total.lifting_ms += t.lifting_ms;
    total.total_ms += t.total_ms;
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn run(scenes_path: &Path, out: &Path, settings: &Settings) -> Result<RunSummary> {
    let started = Instant::now();
    let t = Instant::now();
    let loaded = scenes::load(scenes_path, &settings.backend)?;
    let load_ms = ms(t) / loaded.scenes.len() as f64;
    let cfg = &settings.pipeline;
    let pipeline = Pipeline::new(cfg.clone(), loaded.backends)?;
    let trace_dir = settings.trace_dir.as_deref().unwrap_or(out);

    let mut summaries = Vec::new();
    for (path, scene) in loaded.scenes {
        let t = Instant::now();
        let ctx = SceneContext::new(Arc::clone(&scene), cfg);
        let outcomes = pipeline.run_scene(&ctx, settings.parallel_queries);
        let mut stage_ms = StageTimings::default();
        let mut queries = Vec::new();
        for o in &outcomes {
            let trace = &o.result.trace;
            write(&mask_file(out, &scene.id, &trace.query_id), format_ids(&o.mask.point_ids).as_bytes())?;
            write(&trace_file(trace_dir, &scene.id, &trace.query_id), &serde_json::to_vec_pretty(trace)?)?;
            add(&mut stage_ms, &trace.timings);
            queries.push(QuerySummary {
                query_id: trace.query_id.clone(),
                status: trace.status,
                reason: trace.reason.clone(),
                mask_points: o.mask.point_ids.len(),
                confidence: o.mask.confidence,
                timings: trace.timings,
            });
        }
        let failed = queries.iter().filter(|q| q.status == QueryStatus::Failed).count();
        tracing::info!(scene = %scene.id, queries = queries.len(), failed, "scene done");
        summaries.push(SceneSummary { scene_id: scene.id.clone(), path, load_ms, wall_ms: ms(t), stage_ms, queries });
    }

    let count = |s: QueryStatus| summaries.iter().flat_map(|x| &x.queries).filter(|q| q.status == s).count();
    let summary = RunSummary {
        backend: match settings.backend {
            BackendChoice::Oracle { .. } => "oracle".into(),
            BackendChoice::Http { .. } => "http".into(),
        },
        config_fingerprint: config_fingerprint(cfg),
        config: cfg.clone(),
        wall_ms: ms(started),
        queries: summaries.iter().map(|s| s.queries.len()).sum(),
        ok: count(QueryStatus::Ok),
        empty: count(QueryStatus::Empty),
        failed: count(QueryStatus::Failed),
        scenes: summaries,
    };
    write(&out.join(SUMMARY_FILE), &serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
