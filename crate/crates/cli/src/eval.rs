use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use funcground::eval::{evaluate, format_csv, format_table, EvalItem};
use funcground::pipeline::AblationCell;
use funcground::scene_io::{load_scene, parse_ids};
use funcground::{EvalReport, Mask3D, PipelineConfig};

use crate::run::{mask_file, RunSummary};
use crate::scenes::discover;

pub const EVAL_FILE: &str = "eval.json";

/// Table-3 style row label for a configuration.
pub fn label(cfg: &PipelineConfig) -> String {
    AblationCell {
        k: cfg.effective_sampling().iterations,
        window: cfg.enable_temporal_window,
        verify: cfg.enable_verification,
        two_stage: cfg.enable_two_stage,
    }
    .label()
}

/// Scores the masks of a finished run against the scenes' ground truth.
pub fn eval(scenes_path: &Path, results: &Path) -> Result<(String, EvalReport)> {
    let summary = RunSummary::load(results)?;
    let confidence: HashMap<(&str, &str), f64> = summary
        .scenes
        .iter()
        .flat_map(|s| s.queries.iter().map(move |q| ((s.scene_id.as_str(), q.query_id.as_str()), q.confidence)))
        .collect();

    let mut keys = Vec::new();
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    for dir in discover(scenes_path)? {
        let scene = load_scene(&dir).with_context(|| format!("loading {}", dir.display()))?;
        for q in &scene.queries {
            let path = mask_file(results, &scene.id, &q.id);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let ids = parse_ids(&text).map_err(|bad| anyhow::anyhow!("{}: bad point id `{bad}`", path.display()))?;
            let Some(&conf) = confidence.get(&(scene.id.as_str(), q.id.as_str())) else {
                bail!("{} has no entry for {}/{}", results.join(crate::run::SUMMARY_FILE).display(), scene.id, q.id);
            };
            keys.push(format!("{}/{}", scene.id, q.id));
            predictions.push(Mask3D { point_ids: ids, confidence: conf });
            truths.push(q.gt_mask.clone());
        }
    }
    let items: Vec<EvalItem<'_>> = keys
        .iter()
        .zip(&predictions)
        .zip(&truths)
        .map(|((k, p), g)| EvalItem { query_id: k, prediction: p, ground_truth: g.as_deref() })
        .collect();
    let report = evaluate(&items, &summary.config_fingerprint)?;
    Ok((label(&summary.config), report))
}

pub fn render(rows: &[(String, EvalReport)], csv: bool) -> String {
    if csv {
        format_csv(rows)
    } else {
        format_table(rows)
    }
}
