use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use funcground::mllm::HttpChatBackend;
use funcground::scene_io::{load_scene, MANIFEST_FILE};
use funcground::segment::HttpSegBackend;
use funcground::synth::{load_synth_scene, OracleChat, OracleSegmenter, ORACLE_FILE};
use funcground::{Backends, Scene};

use crate::config::BackendChoice;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(3);

/// A backend that could not be reached before any work started.
#[derive(Debug)]
pub struct Unreachable(pub String);

impl std::fmt::Display for Unreachable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Unreachable {}

/// `path` itself when it is a scene directory, otherwise its scene
/// subdirectories sorted by name.
pub fn discover(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).with_context(|| format!("reading scenes directory {}", path.display()))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let p = entry.with_context(|| format!("listing {}", path.display()))?.path();
        if p.join(MANIFEST_FILE).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        bail!("no scene found in {} (expected {MANIFEST_FILE} in it or its subdirectories)", path.display());
    }
    Ok(dirs)
}

/// Scenes loaded for a run, plus the backends that will answer for them.
pub struct Loaded {
    pub scenes: Vec<(PathBuf, Arc<Scene>)>,
    pub backends: Backends,
}

pub fn load(path: &Path, choice: &BackendChoice) -> Result<Loaded> {
    let dirs = discover(path)?;
    match choice {
        BackendChoice::Oracle { oversegment_rate, seed, policy } => {
            let mut scenes = Vec::new();
            let mut scripts = Vec::new();
            for dir in dirs {
                if !dir.join(ORACLE_FILE).is_file() {
                    bail!("{} has no {ORACLE_FILE}; --oracle needs scenes written by `funcground synth`", dir.display());
                }
                let synth = load_synth_scene(&dir).with_context(|| format!("loading {}", dir.display()))?;
                scenes.push((dir, Arc::clone(&synth.scene)));
                scripts.push(synth.script);
            }
            let chat = OracleChat::new(scripts.clone()).with_policy(*policy);
            let seg = OracleSegmenter::new(scripts).with_oversegmentation(*oversegment_rate, *seed);
            Ok(Loaded { scenes, backends: Backends::new(Arc::new(chat), Arc::new(seg)) })
        }
        BackendChoice::Http { mllm_url, seg_url, chat_model } => {
            preflight(mllm_url, "vision-chat")?;
            preflight(seg_url, "segmentation")?;
            let mut chat = HttpChatBackend::new(mllm_url);
            if let Some(m) = chat_model {
                chat = chat.model(m);
            }
            let seg = HttpSegBackend::new(seg_url);
            let scenes = dirs
                .into_iter()
                .map(|dir| {
                    let scene = load_scene(&dir).with_context(|| format!("loading {}", dir.display()))?;
                    Ok((dir, Arc::new(scene)))
                })
                .collect::<Result<_>>()?;
            Ok(Loaded { scenes, backends: Backends::new(Arc::new(chat), Arc::new(seg)) })
        }
    }
}

/// Checks that something accepts TCP connections at `endpoint`.
fn preflight(endpoint: &str, what: &str) -> Result<()> {
    let url = url::Url::parse(endpoint).with_context(|| format!("invalid {what} URL `{endpoint}`"))?;
    if !matches!(url.scheme(), "http" | "https") {
        bail!("{what} URL `{endpoint}` must use http or https");
    }
    let addrs = url
        .socket_addrs(|| None)
        .map_err(|e| Unreachable(format!("{what} backend at {endpoint} is unreachable: {e}")))?;
    let mut last = None;
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
            Ok(_) => return Ok(()),
            Err(e) => last = Some(e),
        }
    }
    let cause = last.map_or_else(|| "no address".to_string(), |e| e.to_string());
    Err(Unreachable(format!("{what} backend at {endpoint} is unreachable: {cause}")).into())
}
