use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cavl::calibration::read_pose_text;
use cavl::codec::SuiteManifest;
use cavl::lightmap::LightMap;
use cavl::raster::{Label, SegmentationMask};

fn cavl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavl")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Empty cube seen by a small tilted camera looking at the -x wall.
const EMPTY_SCENE: &str = r#"
half_extent = 1524.0
seed = 3
[camera]
fx = 150.0
fy = 150.0
cx = 80.0
cy = 60.0
width = 160
height = 120
[pose]
axis_angle = [-1.2, -1.25, 1.3]
translation = [600.0, 150.0, -100.0]
"#;

/// Sphere close to a small camera.
const SPHERE_SCENE: &str = r#"
half_extent = 1524.0
seed = 11
[camera]
fx = 400.0
fy = 400.0
cx = 96.0
cy = 80.0
width = 192
height = 160
[pose]
axis_angle = [-1.321338195348355, -1.3185626964075352, 1.258919995131494]
translation = [1229.7030668082982, 179.97300607348166, 219.96700742314422]
[noise]
sigma = 0.002
[specimen]
kind = "sphere"
center = [-750.0, 0.0, 0.0]
radius = 300.0
"#;

fn setup(dir: &Path, scene: &str, extra: &str) -> PathBuf {
    fs::write(dir.join("scene.toml"), scene).unwrap();
    let cfg = dir.join("run.toml");
    fs::write(&cfg, format!("scene = \"scene.toml\"\n{extra}")).unwrap();
    cfg
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn empty_cave_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), EMPTY_SCENE, "");
    let out = dir.path().join("out");
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "simulate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let frames = fs::read_dir(out.join("stack")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")).count();
    assert_eq!(frames, 42);
    assert!(out.join("truth/light_map.bin").is_file());
    assert!(!out.join("truth/specimen.obj").exists());

    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "decode"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "calibrate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (pose, _) = read_pose_text(fs::read_to_string(out.join("pose.txt")).unwrap().as_bytes()).unwrap();
    let (truth, _) = read_pose_text(fs::read_to_string(out.join("truth/pose.txt")).unwrap().as_bytes()).unwrap();
    assert!(pose.rotation_angle_to(&truth).to_degrees() < 0.01);
    assert!((pose.translation() - truth.translation()).norm() < 0.5);
    let mask = SegmentationMask::read_pnm(std::io::BufReader::new(fs::File::open(out.join("mask_final.pgm")).unwrap())).unwrap();
    assert_eq!(mask.count(Label::Foreground), 0);

    // a missing intrinsics source is a configuration error
    let o = cavl(&["--out", s(&out), "calibrate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn decode_follows_the_manifest_not_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), EMPTY_SCENE, "");
    let out = dir.path().join("out");
    assert_eq!(code(&cavl(&["--config", s(&cfg), "--out", s(&out), "simulate"])), 0);
    assert_eq!(code(&cavl(&["--config", s(&cfg), "--out", s(&out), "decode"])), 0);
    let reference = fs::read(out.join("light_map.bin")).unwrap();

    // shuffle: rename the files and list them in reverse
    let stack = out.join("stack");
    let text = fs::read_to_string(stack.join("manifest.toml")).unwrap();
    let mut m = SuiteManifest::from_toml(&text).unwrap();
    let n = m.frames.len();
    for (i, rec) in m.frames.iter_mut().enumerate() {
        let new = format!("shuffled_{:03}.pgm", n - 1 - i);
        fs::rename(stack.join(&rec.file), stack.join(&new)).unwrap();
        rec.file = new;
    }
    m.frames.reverse();
    fs::write(stack.join("manifest.toml"), m.to_toml().unwrap()).unwrap();
    let other = dir.path().join("other");
    let o = cavl(&["--config", s(&cfg), "--out", s(&other), "decode", "--stack", s(&stack)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(other.join("light_map.bin")).unwrap(), reference);

    // empty stack
    m.frames.clear();
    fs::write(stack.join("manifest.toml"), m.to_toml().unwrap()).unwrap();
    let o = cavl(&["--config", s(&cfg), "--out", s(&other), "decode", "--stack", s(&stack)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn pipeline_outputs_resume_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), SPHERE_SCENE, "[reconstruction]\ngrid_cells = 12\n[reconstruction.schedule]\nlevels = 2\n");
    let out = dir.path().join("out");
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "pipeline"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["run_manifest.toml", "light_map.bin", "pose.txt", "mask_initial.pgm", "mask_final.pgm", "score.pgm", "recon.obj", "energy.csv", "deviation.csv", "deviation_vertices.txt", "coverage.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("run_manifest.toml")).unwrap();
    for key in ["[decode]", "[calibration.refine]", "boundary_margin", "max_backtracks", "coverage_bins", "[scene_resolved.camera]"] {
        assert!(manifest.contains(key), "{key}");
    }
    let csv = fs::read_to_string(out.join("deviation.csv")).unwrap();
    let mean: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(mean < 1.0, "{mean}");
    let coverage = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert_eq!(coverage.lines().count(), 101);
    assert!(coverage.starts_with("d_mm,cumulative_fraction,face_0"));

    // resume skips everything; rerunning a stage on its inputs reproduces it
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "--resume", "pipeline"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stderr(&o).matches("up to date").count(), 5);
    let recon = fs::read(out.join("recon.obj")).unwrap();
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "reconstruct"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(out.join("recon.obj")).unwrap(), recon);

    // identical meshes give a zero report
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "evaluate", "--truth", s(&out.join("recon.obj"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("deviation.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').take(2).map(|t| t.parse().unwrap()).collect();
    assert_eq!(row, vec![0.0, 0.0]);

    // missing truth is an IO error
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "evaluate", "--truth", s(&dir.path().join("nope.obj"))]);
    assert_eq!(code(&o), 3);

    // anchor in the background
    let o = cavl(&["--config", s(&cfg), "--out", s(&out), "reconstruct", "--x0=-750,1000,0"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("foreground"));

    // a pipeline failure names its stage and stops there
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "scene = \"scene.toml\"\nx0 = [-750.0, 1000.0, 0.0]\n").unwrap();
    let out2 = dir.path().join("out2");
    let o = cavl(&["--config", s(&bad), "--out", s(&out2), "pipeline"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("stage reconstruct failed"), "{}", stderr(&o));
    assert!(!out2.join("coverage.csv").exists());
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "scene = \"missing.toml\"\n").unwrap();
    assert_eq!(code(&cavl(&["--config", s(&cfg), "simulate"])), 2);
    fs::write(&cfg, "[reconstruction.schedule]\nmax_iterations = 0\n").unwrap();
    assert_eq!(code(&cavl(&["--config", s(&cfg), "simulate"])), 2);
    fs::write(&cfg, "[suite]\nphases = 2\n").unwrap();
    assert_eq!(code(&cavl(&["--config", s(&cfg), "simulate"])), 2);
    assert_eq!(code(&cavl(&["--config", s(&dir.path().join("none.toml")), "simulate"])), 2);
    assert_eq!(code(&cavl(&["frobnicate"])), 2);
}

#[test]
fn seed_changes_only_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), SPHERE_SCENE, "");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert_eq!(code(&cavl(&["--config", s(&cfg), "--out", s(out), "--seed", seed, "simulate"])), 0);
    }
    let frame = |d: &Path| fs::read(d.join("stack/frame_010.pgm")).unwrap();
    assert_eq!(frame(&a), frame(&b));
    assert_ne!(frame(&a), frame(&c));
    let lm = |d: &Path| LightMap::read_from(fs::File::open(d.join("truth/light_map.bin")).unwrap()).unwrap();
    assert_eq!(lm(&a), lm(&c));
}
