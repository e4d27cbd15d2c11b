use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_driftnav"));
    c.env_remove("DRIFTNAV_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn driftnav")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = dir.join("tiny.toml");
    std::fs::write(
        &cfg,
        "total_steps = 512\nn_envs = 2\nrollout_horizon = 256\nepochs = 2\nseed = 11\n",
    )
    .unwrap();
    let out = dir.join(name);
    let mut args = vec!["train", "--config", s(&cfg), "--out", s(&out), "--jobs", "1"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn validate_bundled_scenarios() {
    let mut args = vec!["scenario".to_string(), "validate".to_string()];
    for i in 1..=5 {
        args.push(scenarios().join(format!("scene{i}.toml")).display().to_string());
    }
    let o = bin().args(&args).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).matches(": ok").count(), 5);
}

#[test]
fn validate_reports_field_and_distinguishes_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("scene1.toml"))
        .unwrap()
        .replace("edge_l = -7.5", "edge_l = 8.0");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text).unwrap();
    let o = run(&["scenario", "validate", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("edge_l"), "{}", stderr(&o));

    let o = run(&["scenario", "validate", s(&dir.path().join("missing.toml"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn usage_error_is_validation_exit() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn training_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny_train(dir.path(), "a", &[]);
    let b = tiny_train(dir.path(), "b", &[]);
    let ha = manifest(&a)["outputs"]["checkpoint"]["sha256"].clone();
    assert_eq!(ha, manifest(&b)["outputs"]["checkpoint"]["sha256"]);
    let m = manifest(&a);
    assert_eq!(m["command"], "train");
    assert_eq!(m["config"]["gamma"], 0.9999);
    assert_eq!(m["config"]["seed"], 11);

    let ckpt = a.join("policy.ckpt");
    let before = std::fs::read(&ckpt).unwrap();
    let out = dir.path().join("resumed");
    let o = run(&[
        "train",
        "--resume",
        s(&ckpt),
        "--total-steps",
        "1024",
        "--out",
        s(&out),
        "--jobs",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("(512 -> 1024)"), "{}", stdout(&o));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let first_step: usize = metrics
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(first_step > 512);
    assert_eq!(std::fs::read(&ckpt).unwrap(), before, "inputs are never modified");
}

#[test]
fn invalid_gamma_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--gamma", "1.5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn bench_needs_checkpoint_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = run(&[
        "bench",
        "--checkpoint",
        s(&dir.path().join("none.ckpt")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("none.ckpt"));
    assert!(!out.join("bench.csv").exists());
}

#[test]
fn single_seed_bench_marks_std_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_train(dir.path(), "train", &[]).join("policy.ckpt");
    let scen = dir.path().join("scen");
    std::fs::create_dir(&scen).unwrap();
    std::fs::copy(scenarios().join("scene1.toml"), scen.join("scene1.toml")).unwrap();
    let out = dir.path().join("bench");
    let o = run(&[
        "bench",
        "--checkpoint",
        s(&ckpt),
        "--scenarios",
        s(&scen),
        "--ranges",
        "50",
        "--seeds",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    // Static scene: two arms × three metrics.
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[5], "NA", "{row}");
        assert_eq!(cols[7], "1");
    }
    let m = manifest(&out);
    assert_eq!(m["config"]["seeds"], 1);
    assert!(m["inputs"]["checkpoint"]["sha256"].is_string());
    assert!(out.join("summary.json").exists() && out.join("runs.csv").exists());
}

#[test]
fn run_then_replay_matches_report() {
    let root = tempfile::tempdir().unwrap();
    let scene = scenarios().join("scene1.toml");
    let o = bin()
        .env("DRIFTNAV_OUT", root.path())
        .args(["run", "--scenario", s(&scene), "--arm", "vanilla", "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = root.path().join("run");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let final_drift = report["metrics"]["final_drift"].as_f64().unwrap();

    let o = run(&["replay", s(&dir.join("trajectory.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let last = text.lines().last().unwrap();
    assert!(
        last.contains(&format!("final drift {final_drift:.4} m")),
        "{last} vs {final_drift}"
    );
    assert!(text.contains("goal"));
}

#[test]
fn learned_run_without_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--scenario",
        s(&scenarios().join("scene1.toml")),
        "--arm",
        "learned",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 1);
    let o = run(&[
        "run",
        "--scenario",
        s(&scenarios().join("scene1.toml")),
        "--arm",
        "fast",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn replay_empty_and_truncated_logs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["replay", s(&empty)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("empty log"));

    let header = dir.path().join("header.csv");
    std::fs::write(
        &header,
        "t,gt_x,gt_y,gt_yaw,est_x,est_y,est_yaw,steer,speed,scan,event\n",
    )
    .unwrap();
    assert!(stdout(&run(&["replay", s(&header)])).contains("empty log"));

    let trunc = dir.path().join("trunc.csv");
    std::fs::write(
        &trunc,
        "t,gt_x,gt_y,gt_yaw,est_x,est_y,est_yaw,steer,speed,scan,event\n0,0,0,0,0,0,0,0,0,1,\n0.25,0.1,0\n",
    )
    .unwrap();
    let o = run(&["replay", s(&trunc)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = run(&["replay", s(&dir.path().join("absent.csv"))]);
    assert_eq!(code(&o), 3);
}
