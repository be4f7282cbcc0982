//! Shared helpers: simulator ground truth versus pipeline output.

#![allow(dead_code)]

use std::collections::BTreeMap;

use xroads_core::{iou, TrajectoryRecord};
use xroads_eval::{tracking_metrics, TrackBox, TrackingMetrics};
use xroads_sim::GroundTruthBundle;

pub fn gt_boxes(gt: &GroundTruthBundle) -> Vec<TrackBox> {
    gt.tracks
        .iter()
        .flat_map(|t| t.samples.iter().map(move |s| TrackBox { frame: s.frame, id: t.id, bbox: s.bbox }))
        .collect()
}

pub fn hyp_boxes(trajs: &[TrajectoryRecord]) -> Vec<TrackBox> {
    trajs
        .iter()
        .flat_map(|t| t.path.iter().map(move |s| TrackBox { frame: s.frame, id: t.track_id, bbox: s.bbox }))
        .collect()
}

pub fn metrics(gt: &GroundTruthBundle, trajs: &[TrajectoryRecord]) -> TrackingMetrics {
    tracking_metrics(&gt_boxes(gt), &hyp_boxes(trajs), 0.5)
}

/// Ground-truth OD as `(origin, dest) -> count`.
pub fn gt_od(gt: &GroundTruthBundle) -> BTreeMap<(String, String), u64> {
    gt.od.iter().map(|c| ((c.origin.clone(), c.dest.clone()), c.count)).collect()
}

/// For each GT track alive at least `min_s`, the trajectory overlapping it
/// (IoU >= 0.5) on the most frames, with both mean speeds.
pub fn speed_pairs(gt: &GroundTruthBundle, trajs: &[TrajectoryRecord], min_s: f64) -> Vec<(u64, f64, Option<f64>)> {
    let mut by_frame: BTreeMap<u64, Vec<(usize, xroads_core::BBox)>> = BTreeMap::new();
    for (i, t) in trajs.iter().enumerate() {
        for s in &t.path {
            by_frame.entry(s.frame).or_default().push((i, s.bbox));
        }
    }
    let mut out = Vec::new();
    for t in &gt.tracks {
        if t.visible_duration_s(gt.fps) < min_s {
            continue;
        }
        let Some(gt_speed) = t.mean_speed_mps else { continue };
        let mut votes: BTreeMap<usize, u64> = BTreeMap::new();
        for s in &t.samples {
            for (i, b) in by_frame.get(&s.frame).into_iter().flatten() {
                if iou(&s.bbox, b) >= 0.5 {
                    *votes.entry(*i).or_insert(0) += 1;
                }
            }
        }
        let best = votes.into_iter().max_by_key(|&(i, n)| (n, std::cmp::Reverse(i))).map(|(i, _)| i);
        out.push((t.id, gt_speed, best.and_then(|i| trajs[i].mean_speed_mps)));
    }
    out
}

/// A worker on the embedded simulator, paced at the scenario frame rate.
pub fn sim_worker(
    seed: u64,
    scene_path: Option<std::path::PathBuf>,
    store: xroads_service::SharedStore,
) -> xroads_service::Worker {
    let scene = xroads_sim::presets::t_junction().scene_config();
    if let Some(p) = &scene_path {
        std::fs::write(p, scene.to_json_pretty()).unwrap();
    }
    let cfg = xroads_service::WorkerConfig {
        scene,
        scene_path,
        input: xroads_service::InputSpec::Sim { scenario: "t_junction".into(), seed },
        max_speed: false,
        tsc_addr: None,
    };
    xroads_service::Worker::start(cfg, store).unwrap_or_else(|e| panic!("{e}"))
}

pub fn shared_store() -> xroads_service::SharedStore {
    std::sync::Arc::new(std::sync::Mutex::new(xroads_core::store::StatsStore::in_memory()))
}
