//! Gate crossings, movement assignment and origin–destination matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{gate_crossing, Crossing};
use crate::model::{PathSample, TrajectoryRecord};
use crate::Gate;

/// Repeated crossings of one gate in one direction closer than this are
/// treated as detector jitter.
pub const CROSSING_LATCH_FRAMES: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Movement {
    pub id: String,
    pub origin_gate: String,
    pub dest_gate: String,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub track_id: u64,
    pub gate_id: String,
    pub direction: Crossing,
    pub ts_ms: i64,
    pub frame: u64,
}

/// Crossings of consecutive bottom-center points, in path order.
pub fn detect_crossings(track_id: u64, path: &[PathSample], gates: &[Gate]) -> Vec<CrossingEvent> {
    let mut out = Vec::new();
    let mut last: BTreeMap<(usize, Crossing), u64> = BTreeMap::new();
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (pa, pb) = (a.bbox.bottom_center(), b.bbox.bottom_center());
        for (gi, g) in gates.iter().enumerate() {
            let Some(dir) = gate_crossing(pa, pb, g) else {
                continue;
            };
            if let Some(&f) = last.get(&(gi, dir)) {
                if b.frame.saturating_sub(f) < CROSSING_LATCH_FRAMES {
                    continue;
                }
            }
            last.insert((gi, dir), b.frame);
            out.push(CrossingEvent {
                track_id,
                gate_id: g.id.clone(),
                direction: dir,
                ts_ms: b.ts_ms,
                frame: b.frame,
            });
        }
    }
    out
}

/// Picks the movement whose origin gate is crossed forward first and whose
/// destination is crossed forward strictly later; earliest origin, then
/// earliest destination, then definition order break ties.
pub fn assign_movement<'a>(events: &[CrossingEvent], movements: &'a [Movement]) -> Option<&'a Movement> {
    let forward: Vec<&CrossingEvent> = events
        .iter()
        .filter(|e| e.direction == Crossing::Forward)
        .collect();
    let mut best: Option<((u64, u64), &Movement)> = None;
    for m in movements {
        let Some(origin) = forward.iter().find(|e| e.gate_id == m.origin_gate) else {
            continue;
        };
        let Some(dest) = forward
            .iter()
            .find(|e| e.gate_id == m.dest_gate && e.frame > origin.frame)
        else {
            continue;
        };
        let key = (origin.frame, dest.frame);
        if best.as_ref().map_or(true, |(k, _)| key < *k) {
            best = Some((key, m));
        }
    }
    best.map(|(_, m)| m)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdQuery {
    /// Inclusive lower bound on the origin crossing time.
    pub from_ms: Option<i64>,
    /// Exclusive upper bound.
    pub to_ms: Option<i64>,
    pub class: Option<String>,
    /// Bucket width; `None` puts everything in one bucket at `from_ms` (or 0).
    pub bucket_ms: Option<i64>,
}

impl OdQuery {
    fn in_range(&self, ts: i64) -> bool {
        self.from_ms.map_or(true, |f| ts >= f) && self.to_ms.map_or(true, |t| ts < t)
    }

    fn bucket(&self, ts: i64) -> i64 {
        match self.bucket_ms {
            Some(w) if w > 0 => ts.div_euclid(w) * w,
            _ => self.from_ms.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OdKey {
    pub origin: String,
    pub dest: String,
    pub class: String,
    pub bucket_start_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OdMatrix {
    pub cells: BTreeMap<OdKey, u64>,
    /// Trajectories in range without an assigned movement.
    pub unassigned: u64,
}

impl OdMatrix {
    pub fn add(&mut self, key: OdKey, n: u64) {
        if n > 0 {
            *self.cells.entry(key).or_insert(0) += n;
        }
    }

    pub fn merge(&mut self, other: &OdMatrix) {
        for (k, &v) in &other.cells {
            self.add(k.clone(), v);
        }
        self.unassigned += other.unassigned;
    }

    pub fn total(&self) -> u64 {
        self.cells.values().sum()
    }

    /// Count for an origin/destination pair over all classes and buckets.
    pub fn get(&self, origin: &str, dest: &str) -> u64 {
        self.cells
            .iter()
            .filter(|(k, _)| k.origin == origin && k.dest == dest)
            .map(|(_, v)| v)
            .sum()
    }

    /// `(origin, dest) -> count`, collapsing class and bucket.
    pub fn pairs(&self) -> BTreeMap<(String, String), u64> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.cells {
            *out.entry((k.origin.clone(), k.dest.clone())).or_insert(0) += v;
        }
        out
    }

    /// `origin,dest,class,bucket_start_ms,count`, one row per non-zero cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("origin,dest,class,bucket_start_ms,count\n");
        for (k, v) in &self.cells {
            let _ = writeln!(s, "{},{},{},{},{}", k.origin, k.dest, k.class, k.bucket_start_ms, v);
        }
        s
    }
}

/// Movement id and origin crossing for one trajectory, if assigned.
pub fn classify_trajectory<'a>(
    traj: &TrajectoryRecord,
    gates: &[Gate],
    movements: &'a [Movement],
) -> Option<(&'a Movement, CrossingEvent)> {
    let events = detect_crossings(traj.track_id, &traj.path, gates);
    let m = assign_movement(&events, movements)?;
    let origin = events
        .into_iter()
        .find(|e| e.direction == Crossing::Forward && e.gate_id == m.origin_gate)?;
    Some((m, origin))
}

pub fn accumulate_od(
    trajectories: &[TrajectoryRecord],
    gates: &[Gate],
    movements: &[Movement],
    query: &OdQuery,
) -> OdMatrix {
    let mut od = OdMatrix::default();
    for t in trajectories {
        if query.class.as_ref().is_some_and(|c| *c != t.class) {
            continue;
        }
        match classify_trajectory(t, gates, movements) {
            Some((m, origin)) => {
                if !query.in_range(origin.ts_ms) {
                    continue;
                }
                od.add(
                    OdKey {
                        origin: m.origin_gate.clone(),
                        dest: m.dest_gate.clone(),
                        class: t.class.clone(),
                        bucket_start_ms: query.bucket(origin.ts_ms),
                    },
                    1,
                );
            }
            None => {
                if query.in_range(t.first_ts_ms) {
                    od.unassigned += 1;
                }
            }
        }
    }
    od
}
