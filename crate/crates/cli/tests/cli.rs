use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_funcground"));
    for (k, _) in std::env::vars() {
        if k.starts_with("FUNCGROUND_") {
            cmd.env_remove(k);
        }
    }
    cmd.env_remove("RUST_LOG");
    cmd
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Two small synthetic scenes shared by the tests in this file, regenerated
/// once per test process.
fn scenes() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let scenes = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-scenes");
        let _ = std::fs::remove_dir_all(&scenes);
        ok(bin().args(["synth", "--count", "2", "--seed", "40", "--frames", "48", "--out"]).arg(&scenes).output().unwrap());
        scenes
    })
}

fn run_oracle(out: &Path, extra: &[&str]) -> Output {
    bin().args(["run", "--oracle", "--scenes"]).arg(scenes()).arg("--out").arg(out).args(extra).output().unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap()
}

fn query_ids(scene: &Path) -> Vec<String> {
    let m: Value = serde_json::from_slice(&std::fs::read(scene.join("manifest.json")).unwrap()).unwrap();
    m["queries"].as_array().unwrap().iter().map(|q| q["id"].as_str().unwrap().to_string()).collect()
}

#[test]
fn synth_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("res");
    let stdout = ok(run_oracle(&out, &[]));
    assert!(stdout.contains("0 failed"), "{stdout}");

    for scene in ["synth-0040", "synth-0041"] {
        let ids = query_ids(&scenes().join(scene));
        assert!(!ids.is_empty());
        for q in ids {
            assert!(out.join(scene).join(format!("{q}.mask.ids")).is_file());
            let trace: Value =
                serde_json::from_slice(&std::fs::read(out.join(scene).join(format!("{q}.trace.json"))).unwrap()).unwrap();
            assert_eq!(trace["query_id"], q.as_str());
        }
    }
    let s = summary(&out);
    assert_eq!(s["backend"], "oracle");
    assert_eq!(s["failed"], 0);
    for key in ["coarse_ms", "fine_ms", "stage2_ms", "lifting_ms", "total_ms"] {
        assert!(s["scenes"][0]["stage_ms"][key].as_f64().unwrap() >= 0.0, "{key}");
    }

    let table = ok(bin().args(["eval", "--scenes"]).arg(scenes()).arg("--results").arg(&out).output().unwrap());
    assert!(table.lines().nth(1).unwrap().starts_with("K=4, verify"), "{table}");
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert!(report["miou"].as_f64().unwrap() >= 0.9);
    let csv = ok(bin().args(["eval", "--csv", "--scenes"]).arg(scenes()).arg("--results").arg(&out).output().unwrap());
    assert!(csv.starts_with("config,ap25,ap50,ar25,ar50,miou,fingerprint\n\"K=4, verify\","), "{csv}");
}

#[test]
fn trace_dir_moves_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, traces) = (tmp.path().join("res"), tmp.path().join("traces"));
    ok(run_oracle(&out, &["--trace-dir", traces.to_str().unwrap()]));
    assert!(traces.join("synth-0040/q00.trace.json").is_file());
    assert!(!out.join("synth-0040/q00.trace.json").exists());
    assert!(out.join("synth-0040/q00.mask.ids").is_file());
}

#[test]
fn missing_endpoint_without_oracle_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--scenes"]).arg(scenes()).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mllm-url"));
}

#[test]
fn unreachable_backend_exits_with_two() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--scenes"])
        .arg(scenes())
        .arg("--out")
        .arg(tmp.path())
        .args(["--mllm-url", &url, "--seg-url", &url])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreachable"));
    assert!(!tmp.path().join("summary.json").exists());
}

#[test]
fn bad_config_file_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[pipeline]\ntua = 0.5\n").unwrap();
    let out = run_oracle(&tmp.path().join("res"), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tua"));

    let out = run_oracle(&tmp.path().join("res"), &["--tau", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn settings_layer_file_then_env_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[pipeline]\ntau = 0.3\nenable_verification = false\n[pipeline.sampling]\niterations = 2\n")
        .unwrap();
    let tau = |out: &Path| summary(out)["config"]["tau"].as_f64().unwrap();

    let a = tmp.path().join("a");
    ok(run_oracle(&a, &["--config", cfg.to_str().unwrap()]));
    assert_eq!(tau(&a), 0.3);
    assert_eq!(summary(&a)["config"]["sampling"]["iterations"], 2);
    assert_eq!(summary(&a)["config"]["enable_verification"], false);

    let b = tmp.path().join("b");
    ok(bin()
        .env("FUNCGROUND_TAU", "0.4")
        .args(["run", "--oracle", "--scenes"])
        .arg(scenes())
        .arg("--out")
        .arg(&b)
        .args(["--config", cfg.to_str().unwrap()])
        .output()
        .unwrap());
    assert_eq!(tau(&b), 0.4);

    let c = tmp.path().join("c");
    ok(bin()
        .env("FUNCGROUND_TAU", "0.4")
        .env("FUNCGROUND_CONFIG", &cfg)
        .args(["run", "--oracle", "--tau", "0.5", "--k", "1", "--scenes"])
        .arg(scenes())
        .arg("--out")
        .arg(&c)
        .output()
        .unwrap());
    assert_eq!(tau(&c), 0.5);
    assert_eq!(summary(&c)["config"]["sampling"]["iterations"], 1);
    assert_eq!(summary(&c)["config"]["enable_multisampling"], false);
}

#[test]
fn switch_flags_reach_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("res");
    ok(run_oracle(&out, &["--no-window", "--no-verify", "--no-multisample", "--parallel-queries", "3"]));
    let cfg = &summary(&out)["config"];
    assert_eq!(cfg["enable_temporal_window"], false);
    assert_eq!(cfg["enable_verification"], false);
    assert_eq!(cfg["enable_multisampling"], false);
}

/// Vertex colors of a binary PLY written by `export`.
fn ply_colors(path: &Path) -> Vec<[u8; 3]> {
    let bytes = std::fs::read(path).unwrap();
    let marker = b"end_header\n";
    let start = bytes.windows(marker.len()).position(|w| w == marker).unwrap() + marker.len();
    bytes[start..].chunks_exact(15).map(|v| [v[12], v[13], v[14]]).collect()
}

#[test]
fn export_colors_mask_points() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = scenes().join("synth-0040");
    let mask = tmp.path().join("m.ids");
    std::fs::write(&mask, "3\n0\n\n3\n7\n").unwrap();
    let ply = tmp.path().join("out/m.ply");
    ok(bin().args(["export", "--mask"]).arg(&mask).arg("--scene").arg(&scene).arg("--out").arg(&ply).output().unwrap());
    let colors = ply_colors(&ply);
    let red: Vec<usize> = colors.iter().enumerate().filter(|(_, c)| **c == [255, 0, 0]).map(|(i, _)| i).collect();
    assert_eq!(red, vec![0, 3, 7]);
    assert!(colors.iter().enumerate().all(|(i, c)| red.contains(&i) || *c == [128, 128, 128]));

    std::fs::write(&mask, "").unwrap();
    ok(bin().args(["export", "--mask"]).arg(&mask).arg("--scene").arg(&scene).arg("--out").arg(&ply).output().unwrap());
    assert!(ply_colors(&ply).iter().all(|c| *c == [128, 128, 128]));

    std::fs::write(&mask, "5\n4000000\n9000000\n").unwrap();
    let out = bin().args(["export", "--mask"]).arg(&mask).arg("--scene").arg(&scene).arg("--out").arg(&ply).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("4000000") && !err.contains("9000000"), "{err}");

    let out = bin()
        .args(["export", "--mask"])
        .arg(tmp.path().join("absent.ids"))
        .arg("--scene")
        .arg(&scene)
        .arg("--out")
        .arg(&ply)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing file"));
}

#[test]
fn ablate_reports_one_row_per_cell() {
    let one = ok(bin()
        .args(["ablate", "--oracle", "--cell", "K=2, no verify", "--scenes"])
        .arg(scenes())
        .output()
        .unwrap());
    let rows: Vec<&str> = one.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("K=2, no verify"));

    let tmp = tempfile::tempdir().unwrap();
    let all = ok(bin()
        .args(["ablate", "--oracle", "--csv", "--n", "16", "--scenes"])
        .arg(scenes().join("synth-0040"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap());
    let rows: Vec<&str> = all.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().any(|r| r.starts_with("\"K=1, no window, no verify\",")));
    let json: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("ablation.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 12);

    let bad = bin().args(["ablate", "--oracle", "--cell", "K=2, sideways", "--scenes"]).arg(scenes()).output().unwrap();
    assert_eq!(bad.status.code(), Some(2), "clap usage errors exit with 2");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn served_oracle_matches_in_process_oracle() {
    let mut child = bin()
        .args(["synth", "--serve", "127.0.0.1:0", "--scenes"])
        .arg(scenes())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let _server = Server(child);
    let url = line.trim().rsplit(' ').next().unwrap().to_string();
    assert!(url.starts_with("http://127.0.0.1:"), "{line}");

    let tmp = tempfile::tempdir().unwrap();
    let (local, remote): (PathBuf, PathBuf) = (tmp.path().join("local"), tmp.path().join("remote"));
    ok(run_oracle(&local, &[]));
    ok(bin()
        .args(["run", "--scenes"])
        .arg(scenes().join("synth-0041"))
        .arg("--out")
        .arg(&remote)
        .env("FUNCGROUND_MLLM_URL", &url)
        .env("FUNCGROUND_SEG_URL", &url)
        .output()
        .unwrap());
    assert_eq!(summary(&remote)["backend"], "http");
    for q in query_ids(&scenes().join("synth-0041")) {
        let f = format!("synth-0041/{q}.mask.ids");
        assert_eq!(std::fs::read(local.join(&f)).unwrap(), std::fs::read(remote.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_without_work_is_an_error() {
    let out = bin().arg("synth").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
