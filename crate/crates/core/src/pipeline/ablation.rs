use serde::{Deserialize, Serialize};

use crate::eval::{config_fingerprint, evaluate, EvalItem, EvalReport};

use super::{Backends, Pipeline, PipelineConfig, PipelineError, QueryOutcome, SceneContext};

/// One ablation setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationCell {
    pub k: usize,
    pub window: bool,
    pub verify: bool,
    pub two_stage: bool,
}

impl AblationCell {
    pub fn new(k: usize, window: bool, verify: bool) -> Self {
        Self { k, window, verify, two_stage: true }
    }

    /// Row label such as `K=4, verify` or `K=2, no window, no verify`.
    pub fn label(&self) -> String {
        let mut s = format!("K={}", self.k);
        match (self.window, self.verify) {
            (true, true) => s.push_str(", verify"),
            (true, false) => s.push_str(", no verify"),
            (false, true) => s.push_str(", no window"),
            (false, false) => s.push_str(", no window, no verify"),
        }
        if !self.two_stage {
            s.push_str(", single-stage");
        }
        s
    }

    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        cfg.sampling.iterations = self.k.max(1);
        cfg.enable_multisampling = self.k > 1;
        cfg.enable_temporal_window = self.window;
        cfg.enable_verification = self.verify;
        cfg.enable_two_stage = self.two_stage;
        cfg
    }
}

impl std::str::FromStr for AblationCell {
    type Err = String;

    /// Inverse of [`AblationCell::label`]. Missing switches default to on, so
    /// `K=2` alone is the full configuration at `K = 2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(',').map(str::trim);
        let k = parts
            .next()
            .and_then(|p| p.strip_prefix("K=").or_else(|| p.strip_prefix("k=")))
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| format!("`{s}`: expected a label starting with `K=<n>`"))?;
        let mut cell = AblationCell::new(k, true, true);
        for p in parts {
            match p {
                "verify" => cell.verify = true,
                "no verify" => cell.verify = false,
                "window" => cell.window = true,
                "no window" => cell.window = false,
                "single-stage" => cell.two_stage = false,
                "two-stage" => cell.two_stage = true,
                other => return Err(format!("`{s}`: unknown switch `{other}`")),
            }
        }
        Ok(cell)
    }
}

/// `K ∈ {1, 2, 4}` crossed with window and verification on/off: 12 rows.
pub fn default_grid() -> Vec<AblationCell> {
    let mut grid = Vec::new();
    for k in [1, 2, 4] {
        for window in [true, false] {
            for verify in [true, false] {
                grid.push(AblationCell::new(k, window, verify));
            }
        }
    }
    grid
}

/// Scores outcomes (one per query, in scene then query order) against the
/// scenes' ground truth.
pub fn evaluate_outcomes(
    scenes: &[SceneContext],
    outcomes: &[Vec<QueryOutcome>],
    fingerprint: &str,
) -> Result<EvalReport, PipelineError> {
    let mut items = Vec::new();
    for (ctx, outs) in scenes.iter().zip(outcomes) {
        for (q, o) in ctx.scene.queries.iter().zip(outs) {
            items.push(EvalItem { query_id: &q.id, prediction: &o.mask, ground_truth: q.gt_mask.as_deref() });
        }
    }
    evaluate(&items, fingerprint).map_err(|e| PipelineError::Eval(e.to_string()))
}

/// Runs every cell over every scene and reports one row per cell.
pub fn ablation_grid(
    scenes: &[SceneContext],
    base: &PipelineConfig,
    grid: &[AblationCell],
    backends: &Backends,
    parallel_queries: usize,
) -> Result<Vec<(String, EvalReport)>, PipelineError> {
    grid.iter()
        .map(|cell| {
            let cfg = cell.apply(base);
            let pipeline = Pipeline::new(cfg.clone(), backends.clone())?;
            let outcomes: Vec<Vec<QueryOutcome>> =
                scenes.iter().map(|ctx| pipeline.run_scene(ctx, parallel_queries)).collect();
            let report = evaluate_outcomes(scenes, &outcomes, &config_fingerprint(&cfg))?;
            Ok((cell.label(), report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(AblationCell::new(4, true, true).label(), "K=4, verify");
        assert_eq!(AblationCell::new(2, true, false).label(), "K=2, no verify");
        assert_eq!(AblationCell::new(2, false, true).label(), "K=2, no window");
        assert_eq!(AblationCell::new(1, false, false).label(), "K=1, no window, no verify");
        let single = AblationCell { two_stage: false, ..AblationCell::new(4, true, true) };
        assert_eq!(single.label(), "K=4, verify, single-stage");
    }

    #[test]
    fn labels_parse_back() {
        let mut cells = default_grid();
        cells.push(AblationCell { two_stage: false, ..AblationCell::new(8, false, true) });
        for c in cells {
            assert_eq!(c.label().parse::<AblationCell>(), Ok(c));
        }
        assert_eq!("K=2".parse::<AblationCell>(), Ok(AblationCell::new(2, true, true)));
        assert!("K=0, verify".parse::<AblationCell>().is_err());
        assert!("K=2, sideways".parse::<AblationCell>().is_err());
        assert!("verify".parse::<AblationCell>().is_err());
    }

    #[test]
    fn default_grid_has_twelve_distinct_rows() {
        let g = default_grid();
        assert_eq!(g.len(), 12);
        let mut labels: Vec<_> = g.iter().map(|c| c.label()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 12);
    }

    #[test]
    fn apply_sets_switches() {
        let cfg = AblationCell::new(1, false, true).apply(&PipelineConfig::default());
        assert_eq!(cfg.effective_sampling().iterations, 1);
        assert!(!cfg.enable_temporal_window && cfg.enable_verification);
        let cfg = AblationCell::new(4, true, false).apply(&PipelineConfig::default());
        assert_eq!(cfg.effective_sampling().iterations, 4);
        assert!(cfg.enable_multisampling && !cfg.enable_verification);
    }
}
