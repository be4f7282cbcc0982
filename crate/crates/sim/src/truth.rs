//! Ground-truth bundle: true tracks, loop counts, OD matrix and speeds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xroads_core::analytics::{LoopSpec, OccupancyCriterion};
use xroads_core::od::Movement;
use xroads_core::{gate_crossing, overlap_fraction, BBox, Crossing, Gate};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtSample {
    pub frame: u64,
    pub ts_ms: i64,
    pub bbox: BBox,
    /// Footprint center in world metres.
    pub world: [f64; 2],
    /// Heading in radians, counter-clockwise from +x.
    pub heading: f64,
    /// Arc length of the vehicle front along its route.
    pub s_m: f64,
    /// Speed held over the step that follows this sample (m/s).
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtTrack {
    pub id: u64,
    pub class: String,
    pub approach: String,
    pub movement: String,
    pub length_m: f64,
    pub width_m: f64,
    pub spawn_frame: u64,
    /// First frame the vehicle is no longer present; `None` if still present at the end.
    pub despawn_frame: Option<u64>,
    /// Frame at whose step the front passed the stop line.
    pub stop_line_frame: Option<u64>,
    /// Distance over time across visible samples (m/s).
    pub mean_speed_mps: Option<f64>,
    pub samples: Vec<GtSample>,
}

impl GtTrack {
    pub fn visible_duration_s(&self, fps: f64) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (b.frame - a.frame) as f64 / fps,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GtOdCell {
    pub origin: String,
    pub dest: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBundle {
    pub format_version: u64,
    pub scenario: String,
    pub seed: u64,
    pub fps: f64,
    pub frames: u64,
    pub tracks: Vec<GtTrack>,
    pub loop_counts: BTreeMap<String, u64>,
    pub od: Vec<GtOdCell>,
}

impl GroundTruthBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ground truth serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SimError> {
        std::fs::write(path, self.to_json()).map_err(|e| SimError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn od_count(&self, origin: &str, dest: &str) -> u64 {
        self.od
            .iter()
            .find(|c| c.origin == origin && c.dest == dest)
            .map_or(0, |c| c.count)
    }

    pub fn track(&self, id: u64) -> Option<&GtTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }
}

/// Per-vehicle episode counter for one loop: a vehicle counts when it first
/// occupies the loop and can count again only after `d_off` consecutive
/// frames away from it.
#[derive(Debug, Clone)]
pub(crate) struct LoopTally {
    spec: LoopSpec,
    away: BTreeMap<u64, u32>,
    pub count: u64,
}

impl LoopTally {
    pub fn new(spec: LoopSpec) -> Self {
        Self { spec, away: BTreeMap::new(), count: 0 }
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    fn occupied(&self, b: &BBox) -> bool {
        match self.spec.criterion {
            OccupancyCriterion::Overlap => overlap_fraction(&self.spec.polygon, b) >= self.spec.sensitivity,
            OccupancyCriterion::Centroid => self.spec.polygon.contains(b.center()),
        }
    }

    /// `present` lists every visible vehicle this frame.
    pub fn frame(&mut self, present: &[(u64, BBox)]) {
        let mut inside = Vec::new();
        for (id, b) in present {
            if self.occupied(b) {
                inside.push(*id);
                if self.away.insert(*id, 0).is_none() {
                    self.count += 1;
                }
            }
        }
        let d_off = self.spec.d_off;
        self.away.retain(|id, n| {
            if inside.contains(id) {
                return true;
            }
            *n += 1;
            *n < d_off
        });
    }
}

/// Whether the bottom-center path crosses `origin` and later `dest`, both forward.
pub(crate) fn completes_movement(samples: &[GtSample], origin: &Gate, dest: &Gate) -> bool {
    let mut origin_frame = None;
    for w in samples.windows(2) {
        let (a, b) = (w[0].bbox.bottom_center(), w[1].bbox.bottom_center());
        if origin_frame.is_none() && gate_crossing(a, b, origin) == Some(Crossing::Forward) {
            origin_frame = Some(w[1].frame);
        } else if origin_frame.is_some() && gate_crossing(a, b, dest) == Some(Crossing::Forward) {
            return true;
        }
    }
    false
}

pub(crate) fn od_cells(tracks: &[GtTrack], gates: &[Gate], movements: &[Movement]) -> Vec<GtOdCell> {
    let mut cells: BTreeMap<(String, String), u64> = BTreeMap::new();
    for t in tracks {
        let Some(m) = movements.iter().find(|m| m.id == t.movement) else {
            continue;
        };
        let gate = |id: &str| gates.iter().find(|g| g.id == id);
        let (Some(o), Some(d)) = (gate(&m.origin_gate), gate(&m.dest_gate)) else {
            continue;
        };
        if completes_movement(&t.samples, o, d) {
            *cells.entry((m.origin_gate.clone(), m.dest_gate.clone())).or_insert(0) += 1;
        }
    }
    cells
        .into_iter()
        .map(|((origin, dest), count)| GtOdCell { origin, dest, count })
        .collect()
}

pub(crate) fn mean_speed(samples: &[GtSample], fps: f64) -> Option<f64> {
    let (a, b) = (samples.first()?, samples.last()?);
    let dt = (b.frame - a.frame) as f64 / fps;
    (dt > 0.0).then(|| (b.s_m - a.s_m) / dt)
}
