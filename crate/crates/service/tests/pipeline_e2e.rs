mod common;

use xroads_service::{run_packets, OdPair, Pipeline, PipelineError};
use xroads_sim::{apply_noise, presets, simulate, NoiseParams};

#[test]
fn noise_free_run_matches_ground_truth() {
    let sc = presets::t_junction();
    let (packets, gt) = simulate(&sc, 7).unwrap();
    let (_, trajs, summary) = run_packets(sc.scene_config(), &packets).unwrap();
    let m = common::metrics(&gt, &trajs);
    assert_eq!(m.id_switches, 0);
    assert_eq!(m.gt_tracks, m.hyp_tracks);
    assert_eq!(summary.loop_counts, gt.loop_counts);
    let od: Vec<OdPair> = gt
        .od
        .iter()
        .map(|c| OdPair { origin: c.origin.clone(), dest: c.dest.clone(), count: c.count })
        .collect();
    assert_eq!(summary.od, od);
    let pairs = common::speed_pairs(&gt, &trajs, 2.0);
    assert!(!pairs.is_empty());
    for (id, g, h) in pairs {
        let h = h.unwrap_or_else(|| panic!("no speed for GT track {id}"));
        assert!((h - g).abs() <= 0.05 * g, "track {id}: {h} vs {g}");
    }
}

#[test]
fn replay_is_idempotent() {
    let sc = presets::t_junction();
    let (packets, _) = simulate(&sc, 3).unwrap();
    let np = NoiseParams { p_miss: 0.1, jitter_sigma: 1.0, fp_rate: 0.1, ..NoiseParams::default() };
    let noisy = apply_noise(&packets, &np, 6, sc.camera.image_size, 3).unwrap();
    let a = run_packets(sc.scene_config(), &noisy).unwrap();
    let b = run_packets(sc.scene_config(), &noisy).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn noisy_runs_stay_close_to_ground_truth() {
    // One switch in a 40-vehicle run is already 2.5%, so rates are pooled over seeds.
    let sc = presets::t_junction();
    let np = NoiseParams { p_miss: 0.2, jitter_sigma: 2.0, fp_rate: 0.2, ..NoiseParams::default() };
    let (mut switches, mut tracks, mut loop_err, mut loop_total) = (0, 0, 0, 0);
    for seed in 1..=10 {
        let (packets, gt) = simulate(&sc, seed).unwrap();
        let noisy = apply_noise(&packets, &np, 6, sc.camera.image_size, seed).unwrap();
        let (_, trajs, summary) = run_packets(sc.scene_config(), &noisy).unwrap();
        for (id, want) in &gt.loop_counts {
            loop_err += summary.loop_counts[id].abs_diff(*want);
            loop_total += want;
        }
        let m = common::metrics(&gt, &trajs);
        switches += m.id_switches;
        tracks += m.gt_tracks;
    }
    assert!(loop_err as f64 <= 0.05 * loop_total as f64, "{loop_err} / {loop_total}");
    assert!(switches as f64 <= 0.02 * tracks as f64, "{switches} / {tracks}");
}

#[test]
fn invalid_scene_is_rejected_before_any_packet() {
    let mut scene = presets::t_junction().scene_config();
    scene.fps = 0.0;
    assert!(matches!(Pipeline::new(scene), Err(PipelineError::Config(_))));
}

#[test]
fn foreign_and_stale_packets_are_rejected() {
    let sc = presets::t_junction();
    let (packets, _) = simulate(&sc, 2).unwrap();
    let mut p = Pipeline::new(sc.scene_config()).unwrap();
    p.step(&packets[5]).unwrap();
    assert!(matches!(p.step(&packets[4]), Err(PipelineError::Tracker(_))));
    let mut other = packets[6].clone();
    other.camera_id = "elsewhere".into();
    assert!(matches!(p.step(&other), Err(PipelineError::Camera { .. })));
    assert_eq!(p.packets(), 1);
}
