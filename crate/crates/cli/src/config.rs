use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use funcground::mllm::MLLM_URL_ENV;
use funcground::segment::SEG_URL_ENV;
use funcground::synth::KeyFramePolicy;
use funcground::PipelineConfig;
use serde::Deserialize;

/// Contents of a `--config` TOML file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub oracle: Option<bool>,
    pub mllm_url: Option<String>,
    pub seg_url: Option<String>,
    pub chat_model: Option<String>,
    pub oversegment_rate: Option<f64>,
    pub oversegment_seed: Option<u64>,
    pub policy: Option<KeyFramePolicy>,
    pub parallel_queries: Option<usize>,
    pub trace_dir: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    BestVisible,
    ParentCentered,
}

impl From<Policy> for KeyFramePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::BestVisible => KeyFramePolicy::BestVisible,
            Policy::ParentCentered => KeyFramePolicy::ParentCentered,
        }
    }
}

/// Where model answers come from. Each flag may also be set through its
/// `FUNCGROUND_*` environment variable or the config file.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Answer from synthetic ground truth (scenes must carry oracle.json).
    #[arg(long, env = "FUNCGROUND_ORACLE")]
    pub oracle: bool,
    /// Base URL of the vision-chat service.
    #[arg(long, env = MLLM_URL_ENV, value_name = "URL")]
    pub mllm_url: Option<String>,
    /// Base URL of the segmentation service.
    #[arg(long, env = SEG_URL_ENV, value_name = "URL")]
    pub seg_url: Option<String>,
    /// Share of oracle segmentation calls that also return the parent object.
    #[arg(long, env = "FUNCGROUND_OVERSEGMENT_RATE", value_name = "RATE")]
    pub oversegment_rate: Option<f64>,
    /// How the oracle picks its coarse key frame.
    #[arg(long, env = "FUNCGROUND_POLICY", value_enum)]
    pub policy: Option<Policy>,
}

/// Pipeline settings. Precedence: config file < environment < flags.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// TOML file with defaults for any setting (see README).
    #[arg(long, env = "FUNCGROUND_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Consensus threshold on normalized votes.
    #[arg(long, env = "FUNCGROUND_TAU")]
    pub tau: Option<f64>,
    /// Coarse sampling iterations (K).
    #[arg(long, env = "FUNCGROUND_K")]
    pub k: Option<usize>,
    /// Frames per coarse iteration (N).
    #[arg(long, env = "FUNCGROUND_N")]
    pub n: Option<usize>,
    /// Query only the key frame instead of its temporal window.
    #[arg(long, env = "FUNCGROUND_NO_WINDOW")]
    pub no_window: bool,
    /// Skip overlay verification of 2D masks.
    #[arg(long, env = "FUNCGROUND_NO_VERIFY")]
    pub no_verify: bool,
    /// Run a single coarse iteration regardless of K.
    #[arg(long, env = "FUNCGROUND_NO_MULTISAMPLE")]
    pub no_multisample: bool,
    /// Queries grounded concurrently within a scene.
    #[arg(long, env = "FUNCGROUND_PARALLEL_QUERIES", value_name = "N")]
    pub parallel_queries: Option<usize>,
}

pub enum BackendChoice {
    Oracle { oversegment_rate: f64, seed: u64, policy: KeyFramePolicy },
    Http { mllm_url: String, seg_url: String, chat_model: Option<String> },
}

pub struct Settings {
    pub pipeline: PipelineConfig,
    pub backend: BackendChoice,
    pub parallel_queries: usize,
    pub trace_dir: Option<PathBuf>,
}

/// Applies the pipeline flags on top of the file configuration.
pub fn pipeline_config(file: &FileConfig, args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg = file.pipeline.clone();
    if let Some(tau) = args.tau {
        cfg.tau = tau;
    }
    if let Some(k) = args.k {
        cfg.sampling.iterations = k;
        cfg.enable_multisampling = k > 1;
    }
    if let Some(n) = args.n {
        cfg.sampling.frames_per_iteration = n;
    }
    if args.no_window {
        cfg.enable_temporal_window = false;
    }
    if args.no_verify {
        cfg.enable_verification = false;
    }
    if args.no_multisample {
        cfg.enable_multisampling = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve(pipeline: &PipelineArgs, backend: &BackendArgs, trace_dir: Option<&Path>) -> Result<Settings> {
    let file = match &pipeline.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = pipeline_config(&file, pipeline)?;
    let parallel_queries = pipeline.parallel_queries.or(file.parallel_queries).unwrap_or(1);
    if parallel_queries == 0 {
        bail!("--parallel-queries must be at least 1");
    }

    let backend = if backend.oracle || file.oracle.unwrap_or(false) {
        let oversegment_rate = backend.oversegment_rate.or(file.oversegment_rate).unwrap_or(0.0);
        if !(0.0..=1.0).contains(&oversegment_rate) {
            bail!("--oversegment-rate must lie in [0, 1]");
        }
        BackendChoice::Oracle {
            oversegment_rate,
            seed: file.oversegment_seed.unwrap_or(0),
            policy: backend.policy.map(Into::into).or(file.policy).unwrap_or_default(),
        }
    } else {
        let pick = |flag: &Option<String>, file: &Option<String>, what: &str, opt: &str, env: &str| {
            flag.clone().or_else(|| file.clone()).filter(|u| !u.trim().is_empty()).with_context(|| {
                format!("no {what} endpoint: pass {opt}, set {env}, set it in the config file, or use --oracle")
            })
        };
        BackendChoice::Http {
            mllm_url: pick(&backend.mllm_url, &file.mllm_url, "vision-chat", "--mllm-url", MLLM_URL_ENV)?,
            seg_url: pick(&backend.seg_url, &file.seg_url, "segmentation", "--seg-url", SEG_URL_ENV)?,
            chat_model: file.chat_model.clone(),
        }
    };
    Ok(Settings {
        pipeline: cfg,
        backend,
        parallel_queries,
        trace_dir: trace_dir.map(Path::to_path_buf).or(file.trace_dir),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> PipelineArgs {
        PipelineArgs {
            config: None,
            tau: None,
            k: None,
            n: None,
            no_window: false,
            no_verify: false,
            no_multisample: false,
            parallel_queries: None,
        }
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str("[pipeline]\ntau = 0.4\n[pipeline.sampling]\niterations = 2\n").unwrap();
        let cfg = pipeline_config(&file, &args()).unwrap();
        assert_eq!((cfg.tau, cfg.sampling.iterations), (0.4, 2));
        let cfg = pipeline_config(&file, &PipelineArgs { tau: Some(0.5), no_verify: true, ..args() }).unwrap();
        assert_eq!((cfg.tau, cfg.sampling.iterations, cfg.enable_verification), (0.5, 2, false));
    }

    #[test]
    fn k_of_one_disables_multisampling() {
        let cfg = pipeline_config(&FileConfig::default(), &PipelineArgs { k: Some(1), ..args() }).unwrap();
        assert!(!cfg.enable_multisampling);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(pipeline_config(&FileConfig::default(), &PipelineArgs { tau: Some(1.5), ..args() }).is_err());
        assert!(toml::from_str::<FileConfig>("tau = 0.5").is_err());
        assert!(toml::from_str::<FileConfig>("[pipeline]\ntua = 0.5").is_err());
    }
}
