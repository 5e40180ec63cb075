mod config;
mod eval;
mod export;
mod run;
mod scenes;
mod synth;

use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use funcground::pipeline::{ablation_grid, default_grid, AblationCell};
use funcground::SceneContext;
use tracing_subscriber::EnvFilter;

use crate::config::{BackendArgs, PipelineArgs};

/// Ground task descriptions to 3D functional-part masks in RGB-D scans.
///
/// Settings are layered: a TOML file given by --config, then FUNCGROUND_*
/// environment variables, then command-line flags, each overriding the last.
///
/// Exit codes: 0 success (individual queries may still fail; see the
/// summary), 1 configuration or I/O error, 2 model backend unreachable.
#[derive(Debug, Parser)]
#[command(name = "funcground", version)]
struct Cli {
    /// More log output (-v debug, -vv trace). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ground every query of the given scenes and write 3D masks.
    Run {
        /// A scene directory or a directory of scene directories.
        #[arg(long, env = "FUNCGROUND_SCENES")]
        scenes: PathBuf,
        /// Output directory for masks, traces and summary.json.
        #[arg(long, env = "FUNCGROUND_OUT")]
        out: PathBuf,
        /// Write query traces here instead of under --out.
        #[arg(long, env = "FUNCGROUND_TRACE_DIR")]
        trace_dir: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Score the masks of a finished run against ground truth.
    Eval {
        #[arg(long, env = "FUNCGROUND_SCENES")]
        scenes: PathBuf,
        /// Output directory of an earlier `run`.
        #[arg(long)]
        results: PathBuf,
        /// Print CSV rows instead of the aligned table.
        #[arg(long)]
        csv: bool,
    },
    /// Generate synthetic scenes with oracle ground truth, and optionally
    /// serve oracle backends over HTTP.
    Synth {
        /// Write generated scenes under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the first scene.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of scenes, with consecutive seeds.
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Frames per scene (default 240).
        #[arg(long)]
        frames: Option<usize>,
        /// Generate the occluded-pass scene instead of random rooms.
        #[arg(long)]
        occluded: bool,
        /// Serve oracle chat and segmentation on this address, e.g. 127.0.0.1:8080.
        #[arg(long, value_name = "ADDR")]
        serve: Option<SocketAddr>,
        /// Scenes to serve (default: the ones just generated).
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        oversegment_rate: f64,
        #[arg(long, default_value_t = 0)]
        oversegment_seed: u64,
        #[arg(long, value_enum, default_value = "best-visible")]
        policy: config::Policy,
    },
    /// Write a scene cloud as PLY with a mask's points in red.
    Export {
        /// Mask file with one point id per line.
        #[arg(long)]
        mask: PathBuf,
        /// Scene directory holding cloud.ply.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of configurations and report one row each.
    Ablate {
        #[arg(long, env = "FUNCGROUND_SCENES")]
        scenes: PathBuf,
        /// Grid cell such as "K=2, no verify"; repeat for several. Default: K in {1,2,4} x window x verify.
        #[arg(long = "cell", value_name = "LABEL")]
        cells: Vec<AblationCell>,
        /// Print CSV rows instead of the aligned table.
        #[arg(long)]
        csv: bool,
        /// Also write the reports as ablation.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn,funcground=info",
        1 => "info,funcground=debug",
        _ => "debug,funcground=trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .init();
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { scenes, out, trace_dir, backend, pipeline } => {
            let settings = config::resolve(&pipeline, &backend, trace_dir.as_deref())?;
            let s = run::run(&scenes, &out, &settings)?;
            println!(
                "{} queries in {} scene(s): {} ok, {} empty, {} failed ({:.1} s); summary in {}",
                s.queries,
                s.scenes.len(),
                s.ok,
                s.empty,
                s.failed,
                s.wall_ms / 1e3,
                out.join(run::SUMMARY_FILE).display()
            );
        }
        Command::Eval { scenes, results, csv } => {
            let row = eval::eval(&scenes, &results)?;
            write_json(&results.join(eval::EVAL_FILE), &row.1)?;
            print!("{}", eval::render(std::slice::from_ref(&row), csv));
        }
        Command::Synth {
            out,
            seed,
            count,
            frames,
            occluded,
            serve,
            scenes,
            oversegment_rate,
            oversegment_seed,
            policy,
        } => {
            if !(0.0..=1.0).contains(&oversegment_rate) {
                bail!("--oversegment-rate must lie in [0, 1]");
            }
            let mut generated = Vec::new();
            if let Some(out) = &out {
                let args = synth::GenerateArgs { seed, count, frames, occluded };
                generated = synth::write_scenes(out, &args)?.into_iter().map(|(_, s)| s).collect();
                println!("wrote {} scene(s) to {}", generated.len(), out.display());
            }
            match (serve, scenes) {
                (Some(addr), Some(path)) => {
                    let loaded = synth::load_scenes(&path)?;
                    synth::serve(addr, &loaded, oversegment_rate, oversegment_seed, policy.into())?;
                }
                (Some(addr), None) if !generated.is_empty() => {
                    synth::serve(addr, &generated, oversegment_rate, oversegment_seed, policy.into())?;
                }
                (Some(_), None) => bail!("--serve needs --scenes or --out"),
                (None, Some(_)) => bail!("--scenes is only used with --serve"),
                (None, None) if out.is_none() => bail!("nothing to do: pass --out and/or --serve"),
                (None, None) => {}
            }
        }
        Command::Export { mask, scene, out } => {
            let marked = export::export(&mask, &scene, &out)?;
            println!("wrote {} ({marked} mask points)", out.display());
        }
        Command::Ablate { scenes, cells, csv, out, backend, pipeline } => {
            let settings = config::resolve(&pipeline, &backend, None)?;
            let loaded = scenes::load(&scenes, &settings.backend)?;
            let contexts: Vec<SceneContext> =
                loaded.scenes.iter().map(|(_, s)| SceneContext::new(s.clone(), &settings.pipeline)).collect();
            let grid = if cells.is_empty() { default_grid() } else { cells };
            let rows = ablation_grid(&contexts, &settings.pipeline, &grid, &loaded.backends, settings.parallel_queries)?;
            if let Some(dir) = out {
                let json: Vec<_> = rows.iter().map(|(l, r)| serde_json::json!({ "config": l, "report": r })).collect();
                write_json(&dir.join("ablation.json"), &json)?;
            }
            print!("{}", eval::render(&rows, csv));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<scenes::Unreachable>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
