use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calibflow::dataio::{format_pose, read_pose, write_pose};
use calibflow::flow::read_cfl;
use calibflow::RigidTransform;
use nalgebra::Vector3;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_calibflow"));
    c.env_remove("CALIBFLOW_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn calibflow")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "calibflow {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, seed: u64) -> PathBuf {
    let scene = dir.join(format!("scene{seed}"));
    ok(&["gen-synth", "--points", "3000", "--seed", &seed.to_string(), "--out", p(&scene)]);
    scene
}

#[test]
fn gen_synth_writes_archive() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    ok(&["gen-synth", "--points", "5000", "--instances", "6", "--seed", "7", "--out", p(&scene)]);
    for f in ["cloud.bin", "calib.txt", "instances3d.txt", "instances2d.txt", "gt_pose.txt", "scene.json"] {
        assert!(scene.join(f).exists(), "{f} missing");
    }
    assert_eq!(fs::metadata(scene.join("cloud.bin")).unwrap().len(), 5000 * 16);
    assert_eq!(json(scene.join("scene.json"))["seed"], 7);
}

#[test]
fn gen_synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["gen-synth", "--points", "1000", "--seed", "3", "--out", p(d)]);
    }
    for f in ["cloud.bin", "calib.txt", "instances3d.txt", "gt_pose.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_points_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-synth", "--points", "0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("env-scene");
    let out = bin()
        .args(["gen-synth", "--points", "200"])
        .env("CALIBFLOW_OUT", &scene)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(scene.join("cloud.bin").exists());
}

#[test]
fn calibrate_exact_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), 1);
    let out = dir.path().join("cal");
    ok(&["calibrate", "--scene", p(&scene), "--seed", "4", "--out", p(&out)]);
    let report = json(out.join("report.json"));
    assert_eq!(report["command"], "calibrate");
    assert_eq!(report["seed"], 4);
    assert!(report["version"].is_string());
    let frame = &report["frames"][0];
    assert_eq!(frame["metrics_available"], true);
    assert!(frame["metrics"]["E_t"].as_f64().unwrap() < 1e-4);
    assert!(frame["metrics"]["E_R"].as_f64().unwrap() < 0.01);
    assert!(out.join("scene1/pose.txt").exists());
    assert!(out.join("scene1/stage5_pose.txt").exists());
    let csv = fs::read_to_string(out.join("scene1/stages.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn calibrate_noisy_oracle_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let scenes: Vec<PathBuf> = (10..13).map(|s| gen(dir.path(), s)).collect();
    let out = dir.path().join("cal");
    let mut args = vec!["calibrate", "--predictor", "noisy", "--jobs", "3", "--out", p(&out)];
    for s in &scenes {
        args.extend(["--scene", p(s)]);
    }
    ok(&args);
    let report = json(out.join("report.json"));
    assert_eq!(report["frames"].as_array().unwrap().len(), 3);
    assert!(report["aggregate"]["E_t"].as_f64().unwrap() < 0.02);
    assert!(report["aggregate"]["E_R"].as_f64().unwrap() < 0.13);
    assert!(out.join("median_pose.txt").exists());

    // Thread count does not change the result.
    let serial = dir.path().join("serial");
    let mut args = vec!["calibrate", "--predictor", "noisy", "--jobs", "1", "--out", p(&serial)];
    for s in &scenes {
        args.extend(["--scene", p(s)]);
    }
    ok(&args);
    assert_eq!(
        fs::read(out.join("median_pose.txt")).unwrap(),
        fs::read(serial.join("median_pose.txt")).unwrap()
    );
}

#[test]
fn calibrate_from_flow_files_without_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), 2);
    let gt = read_pose(scene.join("gt_pose.txt")).unwrap();
    let t_init = RigidTransform::from_euler_zyx(0.02, -0.01, 0.03)
        .with_translation(Vector3::new(0.1, -0.05, 0.2))
        .compose(&gt);
    let init_path = dir.path().join("init.txt");
    write_pose(&init_path, &t_init).unwrap();

    let flows = dir.path().join("flows");
    ok(&["flow-gt", "--scene", p(&scene), "--t-init", p(&init_path), "--crop", "960x320", "--out", p(&flows)]);
    fs::rename(flows.join("flow_scene2.cfl"), flows.join("stage1_scene2.cfl")).unwrap();

    // Hide the ground truth from the calibration run.
    let blind = dir.path().join("blind").join("scene2");
    fs::create_dir_all(&blind).unwrap();
    for f in ["cloud.bin", "calib.txt"] {
        fs::copy(scene.join(f), blind.join(f)).unwrap();
    }
    let out = dir.path().join("cal");
    ok(&[
        "calibrate", "--scene", p(&blind), "--t-init", p(&init_path), "--predictor", "file",
        "--flow-dir", p(&flows), "--stages", "1", "--out", p(&out),
    ]);
    let report = json(out.join("report.json"));
    assert_eq!(report["frames"][0]["metrics_available"], false);
    assert!(report["frames"][0]["metrics"].is_null());
    let pose = read_pose(out.join("scene2/pose.txt")).unwrap();
    // Flow files store f32, so recovery is close but not exact.
    assert!((pose.translation() - gt.translation()).norm() < 1e-3);
}

#[test]
fn oracle_without_ground_truth_fails() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), 5);
    fs::remove_file(scene.join("gt_pose.txt")).unwrap();
    let out = run(&["calibrate", "--scene", p(&scene), "--out", p(&dir.path().join("cal"))]);
    assert!(!out.status.success());
}

#[test]
fn init_semantic_feeds_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), 6);
    let init = dir.path().join("init");
    ok(&["init-semantic", "--scene", p(&scene), "--out", p(&init)]);
    let report = json(init.join("init.json"));
    assert!(report["E_t"].as_f64().unwrap() < 1e-6);
    assert!(report["E_R"].as_f64().unwrap() < 1e-6);

    let out = dir.path().join("cal");
    ok(&["calibrate", "--scene", p(&scene), "--t-init", p(&init.join("init_pose.txt")), "--out", p(&out)]);
    assert!(json(out.join("report.json"))["frames"][0]["metrics"]["E_t"].as_f64().unwrap() < 1e-4);
}

#[test]
fn init_semantic_two_instances_fails() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), 7);
    let keep = |name: &str| {
        let text = fs::read_to_string(scene.join(name)).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).take(2).collect();
        let path = dir.path().join(name);
        fs::write(&path, lines.join("\n")).unwrap();
        path
    };
    let (i2, i3) = (keep("instances2d.txt"), keep("instances3d.txt"));
    let out = run(&[
        "init-semantic", "--scene", p(&scene), "--instances2d", p(&i2), "--instances3d", p(&i3),
        "--out", p(&dir.path().join("init")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("instances"));
}

#[test]
fn evaluate_three_four_five() {
    let dir = tempfile::tempdir().unwrap();
    let gt = RigidTransform::from_euler_zyx(0.1, 0.2, 0.3);
    let pred = gt.with_translation(Vector3::new(0.03, 0.04, 0.0));
    let init = gt.with_translation(Vector3::new(0.3, 0.4, 0.0));
    let (gp, pp, ip) = (dir.path().join("gt.txt"), dir.path().join("pred.txt"), dir.path().join("init.txt"));
    write_pose(&gp, &gt).unwrap();
    write_pose(&pp, &pred).unwrap();
    write_pose(&ip, &init).unwrap();

    let out = dir.path().join("eval");
    let table = ok(&["evaluate", "--pred", p(&pp), "--gt", p(&gp), "--init", p(&ip), "--out", p(&out)]);
    assert!(table.contains("E_t"));
    let m = &json(out.join("report.json"))["metrics"];
    assert!((m["E_t"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!((m["MRR"].as_f64().unwrap() - 90.0).abs() < 1e-9);

    let same = dir.path().join("same");
    ok(&["evaluate", "--pred", p(&gp), "--gt", p(&gp), "--out", p(&same)]);
    let m = &json(same.join("report.json"))["metrics"];
    for key in ["E_t", "E_R", "E_Roll", "E_Pitch", "E_Yaw", "MSEE"] {
        assert!(m[key].as_f64().unwrap().abs() < 1e-12, "{key}");
    }
    assert!(m.get("MRR").is_none());
}

#[test]
fn flow_gt_of_identical_poses_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), 9);
    let out = dir.path().join("flow");
    ok(&["flow-gt", "--scene", p(&scene), "--t-init", p(&scene.join("gt_pose.txt")), "--out", p(&out)]);
    let flow = read_cfl(out.join("flow_scene9.cfl")).unwrap();
    assert!(flow.valid_count() > 1000);
    assert!(flow.iter_valid().all(|(_, _, f)| f.x == 0.0 && f.y == 0.0));
}

#[test]
fn sequence_median_flags_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let common = RigidTransform::from_euler_zyx(0.01, 0.02, -0.03).with_translation(Vector3::new(0.0, -0.08, -0.27));
    let outlier = common.with_translation(Vector3::new(2.0, 1.0, 0.0));
    let mut text = String::new();
    for i in 0..9 {
        let t = if i == 3 { outlier } else { common };
        text.push_str(&format_pose(&t));
        text.push('\n');
    }
    let list = dir.path().join("poses.txt");
    fs::write(&list, text).unwrap();
    let out = dir.path().join("median");
    let stdout = ok(&["sequence-median", p(&list), "--out", p(&out)]);
    let median = calibflow::dataio::parse_pose(&stdout).unwrap();
    assert!((median.rotation() - common.rotation()).amax() < 1e-12);
    assert_eq!(median.translation(), common.translation());
    assert_eq!(json(out.join("median.json"))["outliers"], serde_json::json!([3]));
}
