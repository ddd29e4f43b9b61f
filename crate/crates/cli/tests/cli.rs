use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_levelstereo"));
    c.env("RUST_LOG", "warn");
    c
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// A 128x112 random-dot scene whose figure is large enough to survive the
/// default median filter.
fn synth(dir: &Path) -> PathBuf {
    let scene = dir.join("scene");
    ok(bin()
        .args([
            "synth", "--width", "128", "--height", "112", "--dfg", "12", "--dbg", "3",
        ])
        .args(["--fraction", "0.7", "--dmax", "16", "--seed", "21", "--out"])
        .arg(&scene)
        .output()
        .unwrap());
    scene
}

fn run_cmd(scene: &Path, out: &Path, extra: &[&str]) -> Command {
    let mut c = bin();
    c.arg("run")
        .arg("--left")
        .arg(scene.join("left.png"))
        .arg("--right")
        .arg(scene.join("right.png"))
        .args(["--dmax", "16", "--init-ellipse", "63.5,55.5,38,33", "--config"])
        .arg(scene.join("suggested.cfg"))
        .arg("--out")
        .arg(out)
        .args(extra);
    c
}

fn with_gt<'a>(c: &'a mut Command, scene: &Path) -> &'a mut Command {
    c.arg("--gt-disparity")
        .arg(scene.join("gt_disparity.pfm"))
        .arg("--gt-boundary")
        .arg(scene.join("gt_boundary.png"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn synth_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    for f in [
        "left.png",
        "right.png",
        "gt_disparity.pfm",
        "gt_boundary.png",
        "gt_occlusion.png",
        "scene.json",
    ] {
        assert!(scene.join(f).is_file(), "{f}");
    }
    let out = tmp.path().join("run");
    ok(with_gt(&mut run_cmd(&scene, &out, &["--scene-id", "ellipse"]), &scene)
        .output()
        .unwrap());
    for f in [
        "disparity.pfm",
        "disparity.png",
        "occlusion.png",
        "overlay.png",
        "phi.pfm",
        "trace.csv",
        "config.txt",
        "metrics.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let m = manifest(&out);
    assert_eq!(m["status"], "converged");
    let f1 = m["metrics"]["f1"].as_f64().unwrap();
    assert!(f1 >= 0.8, "f1 {f1}");

    let mut rdr = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "scene_id",
            "precision",
            "recall",
            "f1",
            "bad4",
            "iterations",
            "wall_time"
        ]
    );
    let row = rdr.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "ellipse");

    // scoring the saved outputs reproduces the run's own metrics
    let eval = ok(bin()
        .arg("eval")
        .arg("--pred-disparity")
        .arg(out.join("disparity.pfm"))
        .arg("--pred-occlusion")
        .arg(out.join("occlusion.png"))
        .arg("--gt-disparity")
        .arg(scene.join("gt_disparity.pfm"))
        .arg("--gt-boundary")
        .arg(scene.join("gt_boundary.png"))
        .output()
        .unwrap());
    let text = String::from_utf8(eval.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let eval_row = rdr.records().next().unwrap().unwrap();
    assert_eq!(eval_row[3].parse::<f64>().unwrap(), f1);
}

#[test]
fn run_without_ground_truth_skips_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    let out = tmp.path().join("run");
    ok(run_cmd(&scene, &out, &["--set", "max_iterations=5"]).output().unwrap());
    assert!(out.join("disparity.pfm").is_file());
    assert!(!out.join("metrics.csv").exists());
    let m = manifest(&out);
    assert!(m["metrics"].is_null());
    assert_eq!(m["iterations"], 5);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6);
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "mu = 0.5\nmu_typo = 1\n").unwrap();
    let out = tmp.path().join("run");
    let res = bin()
        .arg("run")
        .arg("--left")
        .arg(scene.join("left.png"))
        .arg("--right")
        .arg(scene.join("right.png"))
        .args(["--dmax", "16", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("mu_typo"), "{err}");
    assert!(!out.exists());

    let res = run_cmd(&scene, &out, &["--set", "bogus=3"]).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("bogus"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        ok(run_cmd(&scene, dir, &["--set", "max_iterations=15"])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap());
    }
    for f in [
        "disparity.pfm",
        "phi.pfm",
        "occlusion.png",
        "disparity.png",
        "trace.csv",
        "manifest.json",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_hashes_match_the_artifacts() {
    use sha2::{Digest, Sha256};
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    let out = tmp.path().join("run");
    ok(run_cmd(&scene, &out, &["--set", "max_iterations=3"]).output().unwrap());
    let m = manifest(&out);
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for o in outputs {
        let name = o["name"].as_str().unwrap();
        let digest = hex::encode(Sha256::digest(fs::read(out.join(name)).unwrap()));
        assert_eq!(o["sha256"].as_str().unwrap(), digest, "{name}");
    }
    let left = m["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["role"] == "left")
        .unwrap();
    assert_eq!(
        left["sha256"].as_str().unwrap(),
        hex::encode(Sha256::digest(fs::read(scene.join("left.png")).unwrap()))
    );
}

#[test]
fn costvol_writes_volumes_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    let out = tmp.path().join("vol");
    ok(bin()
        .arg("costvol")
        .arg("--left")
        .arg(scene.join("left.png"))
        .arg("--right")
        .arg(scene.join("right.png"))
        .args(["--dmax", "16", "--out"])
        .arg(&out)
        .output()
        .unwrap());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("costvol.json")).unwrap()).unwrap();
    assert_eq!(meta["depth"], 17);
    for f in ["matching.f32", "monocular.f32", "occlusion.f32"] {
        let bytes = fs::read(out.join(f)).unwrap();
        assert_eq!(bytes.len(), 128 * 112 * 17 * 4, "{f}");
        let max = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .fold(0.0f32, f32::max);
        assert!(max <= 1.0);
    }
}

#[test]
fn left_view_ground_truth_is_converted() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path());
    let out = tmp.path().join("run");
    ok(run_cmd(
        &scene,
        &out,
        &["--set", "max_iterations=2", "--gt-view", "left", "--gt-disparity"],
    )
    .arg(scene.join("gt_disparity.pfm"))
    .output()
    .unwrap());
    let m = manifest(&out);
    assert_eq!(m["gt_view"], "left");
    assert!(m["gt_conversion"]["filled"].as_u64().unwrap() > 0);
}
