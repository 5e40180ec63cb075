use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use funcground::server;
use funcground::synth::{
    generate, load_synth_scene, write_synth_scene, KeyFramePolicy, OracleChat, OracleSegmenter, SynthScene, SynthSpec,
};
use funcground::Backends;

use crate::scenes::discover;

pub struct GenerateArgs {
    pub seed: u64,
    pub count: u64,
    pub frames: Option<usize>,
    pub occluded: bool,
}

/// Writes `count` scenes with consecutive seeds under `out`, returning their directories.
pub fn write_scenes(out: &Path, args: &GenerateArgs) -> Result<Vec<(PathBuf, SynthScene)>> {
    let mut written = Vec::new();
    for seed in args.seed..args.seed + args.count {
        let mut spec = if args.occluded { SynthSpec::occluded_pass(seed) } else { SynthSpec::random(seed) };
        if let Some(n) = args.frames {
            spec.n_frames = n;
        }
        let synth = generate(&spec).with_context(|| format!("generating scene for seed {seed}"))?;
        let dir = out.join(&synth.scene.id);
        write_synth_scene(&synth, &dir).with_context(|| format!("writing {}", dir.display()))?;
        tracing::info!(scene = %synth.scene.id, queries = synth.scene.queries.len(), "wrote {}", dir.display());
        written.push((dir, synth));
    }
    Ok(written)
}

pub fn load_scenes(path: &Path) -> Result<Vec<SynthScene>> {
    discover(path)?
        .into_iter()
        .map(|dir| load_synth_scene(&dir).with_context(|| format!("loading {}", dir.display())))
        .collect()
}

/// Serves oracle backends for `scenes` until the process is killed.
pub fn serve(addr: SocketAddr, scenes: &[SynthScene], rate: f64, seed: u64, policy: KeyFramePolicy) -> Result<()> {
    if scenes.is_empty() {
        bail!("no scenes to serve");
    }
    let scripts: Vec<_> = scenes.iter().map(|s| Arc::clone(&s.script)).collect();
    let backends = Backends::new(
        Arc::new(OracleChat::new(scripts.clone()).with_policy(policy)),
        Arc::new(OracleSegmenter::new(scripts).with_oversegmentation(rate, seed)),
    );
    let handle = server::spawn(addr, server::router(backends, "oracle", "oracle"))
        .with_context(|| format!("binding {addr}"))?;
    // Scripts wait for this line before sending requests.
    println!("serving {} scene(s) on {}", scenes.len(), handle.url());
    handle.wait().context("oracle server stopped")
}
