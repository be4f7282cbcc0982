//! Tracking metrics against ground-truth tracks: identity switches,
//! fragmentations and frame-level recall.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use xroads_core::assignment::{hungarian, Matrix};
use xroads_core::{iou, BBox};

/// One box of one track in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackBox {
    pub frame: u64,
    pub id: u64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub id_switches: u64,
    /// Times a ground-truth track is matched again after being unmatched.
    pub fragmentations: u64,
    pub gt_frames: u64,
    pub matched_frames: u64,
    pub track_recall: f64,
    pub gt_tracks: u64,
    pub hyp_tracks: u64,
}

fn by_frame(boxes: &[TrackBox]) -> BTreeMap<u64, Vec<&TrackBox>> {
    let mut m: BTreeMap<u64, Vec<&TrackBox>> = BTreeMap::new();
    for b in boxes {
        m.entry(b.frame).or_default().push(b);
    }
    m
}

/// Per frame, ground truth and hypotheses are paired by a minimum-cost
/// assignment on `1 − IoU`; pairs below `iou_threshold` are discarded, and
/// the assignment first maximises the number of admissible pairs.
pub fn tracking_metrics(gt: &[TrackBox], hyp: &[TrackBox], iou_threshold: f64) -> TrackingMetrics {
    let gt_frames = by_frame(gt);
    let hyp_frames = by_frame(hyp);
    let mut last_hyp: BTreeMap<u64, u64> = BTreeMap::new();
    let mut was_matched: BTreeMap<u64, bool> = BTreeMap::new();
    let mut m = TrackingMetrics {
        gt_tracks: gt.iter().map(|b| b.id).collect::<BTreeSet<_>>().len() as u64,
        hyp_tracks: hyp.iter().map(|b| b.id).collect::<BTreeSet<_>>().len() as u64,
        ..Default::default()
    };
    let empty = Vec::new();
    for (frame, gs) in &gt_frames {
        let hs = hyp_frames.get(frame).unwrap_or(&empty);
        m.gt_frames += gs.len() as u64;
        let ious = Matrix::from_fn(gs.len(), hs.len(), |r, c| iou(&gs[r].bbox, &hs[c].bbox));
        let penalty = (gs.len() + hs.len() + 1) as f64;
        let cost = Matrix::from_fn(gs.len(), hs.len(), |r, c| {
            let v = ious.get(r, c);
            if v >= iou_threshold {
                1.0 - v
            } else {
                penalty
            }
        });
        let assign = hungarian(&cost);
        for (r, g) in gs.iter().enumerate() {
            let matched = assign[r].filter(|&c| ious.get(r, c) >= iou_threshold);
            let prev_matched = was_matched.get(&g.id).copied();
            match matched {
                Some(c) => {
                    m.matched_frames += 1;
                    let h = hs[c].id;
                    if let Some(prev) = last_hyp.insert(g.id, h) {
                        if prev != h {
                            m.id_switches += 1;
                        }
                    }
                    if prev_matched == Some(false) {
                        m.fragmentations += 1;
                    }
                    was_matched.insert(g.id, true);
                }
                None => {
                    // Only an interruption after a first match can fragment.
                    if last_hyp.contains_key(&g.id) {
                        was_matched.insert(g.id, false);
                    }
                }
            }
        }
    }
    m.track_recall = if m.gt_frames > 0 { m.matched_frames as f64 / m.gt_frames as f64 } else { 1.0 };
    m
}
