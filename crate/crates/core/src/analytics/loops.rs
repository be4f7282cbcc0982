//! Virtual loops: debounced presence and per-track counting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::overlap_fraction;
use crate::model::ClassId;
use crate::tracker::TrackSnapshot;
use crate::Polygon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccupancyCriterion {
    /// Fraction of the box area inside the loop is at least `sensitivity`.
    #[default]
    Overlap,
    /// Box center lies inside the loop.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub id: String,
    pub polygon: Polygon,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
    #[serde(default = "default_d_on")]
    pub d_on: u32,
    #[serde(default = "default_d_off")]
    pub d_off: u32,
    #[serde(default)]
    pub criterion: OccupancyCriterion,
}

fn default_sensitivity() -> f64 {
    0.25
}

fn default_d_on() -> u32 {
    1
}

fn default_d_off() -> u32 {
    3
}

impl LoopSpec {
    pub fn new(id: impl Into<String>, polygon: Polygon) -> Self {
        Self {
            id: id.into(),
            polygon,
            sensitivity: default_sensitivity(),
            d_on: default_d_on(),
            d_off: default_d_off(),
            criterion: OccupancyCriterion::Overlap,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(format!("loop id {:?} must be non-empty without whitespace", self.id));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity <= 1.0) {
            return Err(format!("loop {}: sensitivity must be in (0, 1]", self.id));
        }
        if self.d_on < 1 || self.d_off < 1 {
            return Err(format!("loop {}: d_on and d_off must be >= 1", self.id));
        }
        Ok(())
    }

    pub fn occupies(&self, t: &TrackSnapshot) -> bool {
        match self.criterion {
            OccupancyCriterion::Overlap => overlap_fraction(&self.polygon, &t.bbox) >= self.sensitivity,
            OccupancyCriterion::Centroid => self.polygon.contains(t.bbox.center()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceEdge {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountEvent {
    pub track_id: u64,
    pub class: ClassId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopStepOutput {
    pub edges: Vec<PresenceEdge>,
    pub counts: Vec<CountEvent>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Latch {
    empty_run: u32,
}

/// Loop geometry plus its running detector state.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLoop {
    spec: LoopSpec,
    presence: bool,
    occupied_run: u32,
    empty_run: u32,
    /// Tracks counted in their current occupancy episode.
    latches: BTreeMap<u64, Latch>,
    total: u64,
}

impl VirtualLoop {
    pub fn new(spec: LoopSpec) -> Self {
        Self {
            spec,
            presence: false,
            occupied_run: 0,
            empty_run: 0,
            latches: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn spec(&self) -> &LoopSpec {
        &self.spec
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn presence(&self) -> bool {
        self.presence
    }

    /// Count events since creation (or the last geometry edit).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Advance one frame with the confirmed tracks of that frame.
    pub fn step(&mut self, tracks: &[TrackSnapshot]) -> LoopStepOutput {
        let mut out = LoopStepOutput::default();
        let mut any = false;
        let mut seen: Vec<u64> = Vec::new();
        for t in tracks {
            if !self.spec.occupies(t) {
                continue;
            }
            any = true;
            seen.push(t.id);
            match self.latches.get_mut(&t.id) {
                Some(l) => l.empty_run = 0,
                None => {
                    self.latches.insert(t.id, Latch::default());
                    self.total += 1;
                    out.counts.push(CountEvent {
                        track_id: t.id,
                        class: t.class,
                    });
                }
            }
        }
        let d_off = self.spec.d_off;
        self.latches.retain(|id, l| {
            if seen.contains(id) {
                return true;
            }
            l.empty_run += 1;
            l.empty_run < d_off
        });

        if any {
            self.occupied_run += 1;
            self.empty_run = 0;
        } else {
            self.empty_run += 1;
            self.occupied_run = 0;
        }
        if !self.presence && self.occupied_run >= self.spec.d_on {
            self.presence = true;
            out.edges.push(PresenceEdge::Rising);
        } else if self.presence && self.empty_run >= self.spec.d_off {
            self.presence = false;
            out.edges.push(PresenceEdge::Falling);
        }
        out
    }
}
