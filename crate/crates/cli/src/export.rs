use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use funcground::ply::write_ply;
use funcground::scene_io::load_cloud;

const MASK_COLOR: [u8; 3] = [255, 0, 0];
const REST_COLOR: [u8; 3] = [128, 128, 128];

/// Writes the scene cloud as a PLY with mask points red and the rest gray.
/// Returns the number of highlighted points.
pub fn export(mask: &Path, scene: &Path, out: &Path) -> Result<usize> {
    if !mask.is_file() {
        bail!("missing file: {}", mask.display());
    }
    let text = fs::read_to_string(mask).with_context(|| format!("reading {}", mask.display()))?;
    let cloud = load_cloud(scene).with_context(|| format!("loading cloud of {}", scene.display()))?;
    let n = cloud.points.len();

    let mut colors = vec![REST_COLOR; n];
    let mut marked = 0;
    for (line_no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let id: u64 = t
            .parse()
            .map_err(|_| anyhow::anyhow!("{}:{}: `{t}` is not a point id", mask.display(), line_no + 1))?;
        if id >= n as u64 {
            bail!("{}:{}: point id {id} is outside the cloud ({n} points)", mask.display(), line_no + 1);
        }
        if colors[id as usize] != MASK_COLOR {
            colors[id as usize] = MASK_COLOR;
            marked += 1;
        }
    }

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_ply(BufWriter::new(file), &cloud.points, Some(&colors)).with_context(|| format!("writing {}", out.display()))?;
    Ok(marked)
}
