//! The `xroads` binary, driven as a subprocess.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use xroads_core::protocol::SceneConfig;
use xroads_core::store::StatsStore;
use xroads_core::ClassSet;
use xroads_eval::records::load_dataset;
use xroads_eval::{evaluate_dataset, EvalConfig};
use xroads_service::{RunSummary, StatsParams, StatsQuery};
use xroads_sim::GroundTruthBundle;

fn xroads(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xroads")).args(args).output().expect("spawn xroads")
}

fn ok(args: &[&str]) -> String {
    let out = xroads(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulates seed 5 and replays it into a store; returns the summary.
fn simulate_and_replay(dir: &Path) -> RunSummary {
    let (pk, gt, scene, store) = (dir.join("p.jsonl"), dir.join("gt.json"), dir.join("scene.json"), dir.join("store"));
    ok(&["simulate", "--scenario", "t_junction", "--seed", "5", "--out", p(&pk), "--gt", p(&gt), "--scene-out", p(&scene)]);
    let out = ok(&["replay", "--scene", p(&scene), "--input", p(&pk), "--store", p(&store), "--max-speed"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1, "{out}");
    serde_json::from_str(lines[0]).unwrap()
}

#[test]
fn simulate_then_replay_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let summary = simulate_and_replay(dir.path());
    let gt = GroundTruthBundle::load(dir.path().join("gt.json")).unwrap();
    assert_eq!(summary.packets, 2400);
    assert_eq!(summary.loop_counts, gt.loop_counts);
    let scene = SceneConfig::load(dir.path().join("scene.json")).unwrap();
    assert_eq!(scene.camera_id, summary.camera_id);

    let m: Value = serde_json::from_str(&ok(&[
        "eval",
        "track",
        "--gt",
        p(&dir.path().join("gt.json")),
        "--hyp",
        p(&dir.path().join("store")),
    ]))
    .unwrap();
    assert_eq!(m["id_switches"], 0);
    assert_eq!(m["gt_tracks"].as_u64().unwrap() as usize, gt.tracks.len());
}

#[test]
fn report_prints_the_query_rendering() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_replay(dir.path());
    let store_dir = dir.path().join("store");
    let store = StatsStore::open(&store_dir).unwrap();
    let cases: [&[&str]; 4] = [
        &[],
        &["--bucket", "1m", "--kind", "count"],
        &["--bucket", "5m", "--detector", "L_W_exit", "--format", "json"],
        &["--from", "1700000030000", "--to", "1700000090000", "--bucket", "1m", "--class", "Car"],
    ];
    for extra in cases {
        let mut args = vec!["report", "--store", p(&store_dir)];
        args.extend_from_slice(extra);
        let cli = ok(&args);
        let mut params = StatsParams::default();
        for kv in extra.chunks(2) {
            let v = Some(kv[1].to_string());
            match kv[0] {
                "--bucket" => params.bucket = v,
                "--kind" => params.kind = v,
                "--detector" => params.detector = v,
                "--format" => params.format = v,
                "--from" => params.from = v,
                "--to" => params.to = v,
                "--class" => params.class = v,
                f => panic!("{f}"),
            }
        }
        let direct = StatsQuery::parse(&params).unwrap().render(&store).unwrap();
        assert_eq!(cli, direct, "{extra:?}");
    }
    let out = xroads(&["report", "--store", p(&store_dir), "--bucket", "2m"]);
    assert!(!out.status.success());
}

#[test]
fn configuration_errors_exit_before_reading_input() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = dir.path().join("bad.json");
    let mut scene = xroads_sim::presets::t_junction().scene_config();
    scene.loops[0].id = scene.zones[0].id.clone();
    std::fs::write(&scene_path, scene.to_json_pretty()).unwrap();
    let out = xroads(&["run", "--scene", p(&scene_path), "--input", "/nonexistent/never-opened.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    let out = xroads(&["replay", "--input", "tcp://127.0.0.1:9"]);
    assert!(!out.status.success());
    let out = xroads(&["run", "--input", "some-file.jsonl"]);
    assert!(!out.status.success());
}

#[test]
fn run_on_the_embedded_simulator() {
    let out = ok(&["run", "--input", "sim:t_junction?seed=4", "--max-speed"]);
    let s: RunSummary = serde_json::from_str(out.trim()).unwrap();
    let (_, gt) = xroads_sim::simulate(&xroads_sim::presets::t_junction(), 4).unwrap();
    assert_eq!(s.loop_counts, gt.loop_counts);
}

#[test]
fn eval_det_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noisy, noise) = (dir.path().join("c.jsonl"), dir.path().join("n.jsonl"), dir.path().join("noise.json"));
    std::fs::write(&noise, r#"{"p_miss": 0.1, "jitter_sigma": 2.0, "fp_rate": 0.3}"#).unwrap();
    ok(&["simulate", "--scenario", "t_junction", "--seed", "2", "--out", p(&clean), "--clean"]);
    ok(&["simulate", "--scenario", "t_junction", "--seed", "2", "--out", p(&noisy), "--noise", p(&noise)]);
    let cli = ok(&["eval", "det", "--pred", p(&noisy), "--gt", p(&clean), "--iou", "0.5"]);
    let classes = ClassSet::preset("six").unwrap();
    let lib = evaluate_dataset(
        &load_dataset(&noisy, &classes).unwrap(),
        &load_dataset(&clean, &classes).unwrap(),
        &classes,
        &EvalConfig::default(),
    )
    .unwrap()
    .to_csv();
    assert_eq!(cli, lib);
    let self_eval = ok(&["eval", "det", "--pred", p(&clean), "--gt", p(&clean)]);
    assert!(self_eval.lines().any(|l| l.starts_with("ALL,") && l.ends_with(",1")), "{self_eval}");
}

#[test]
fn dataset_planning_commands() {
    let out = ok(&["plan-augment", "--manifest", "reference", "--dup-cap", "none"]);
    let total: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("TOTAL_IMAGES,"))
        .and_then(|r| r.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((total - 108_000.0).abs() <= 10_800.0, "{total}");
    let capped = xroads(&["plan-augment", "--manifest", "reference"]);
    assert!(capped.status.success());
    assert!(String::from_utf8_lossy(&capped.stderr).contains("unmet"));

    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("split.csv");
    let out = ok(&["split", "--manifest", "reference", "--seed", "3", "--out", p(&out_path)]);
    assert_eq!(out, "train,valid,test\n74430,4135,4135\n");
    assert!(std::fs::metadata(&out_path).unwrap().len() > 0);
    assert!(!xroads(&["split", "--manifest", "reference", "--ratios", "0.9,0.1"]).status.success());
}
