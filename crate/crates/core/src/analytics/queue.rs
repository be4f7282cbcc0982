//! Queue zones: stopped-vehicle count, area occupancy and calibrated length.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{overlap_fraction, GeometryError};
use crate::tracker::TrackSnapshot;
use crate::{Homography, Point, Polygon};

/// Minimum overlap for a track to be considered inside a zone.
pub const ZONE_OVERLAP_MIN: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueZoneSpec {
    pub id: String,
    pub polygon: Polygon,
    /// Pixel segment from the stop line back into the approach.
    pub axis: [[f64; 2]; 2],
    /// m/s
    #[serde(default = "default_v_stop")]
    pub v_stop: f64,
}

fn default_v_stop() -> f64 {
    0.5
}

impl QueueZoneSpec {
    pub fn axis_points(&self) -> (Point, Point) {
        let [a, b] = self.axis;
        (Point::new(a[0], a[1]), Point::new(b[0], b[1]))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(format!("zone id {:?} must be non-empty without whitespace", self.id));
        }
        let (a, b) = self.axis_points();
        if a == b || !self.polygon.contains(a) || !self.polygon.contains(b) {
            return Err(format!("zone {}: axis endpoints must be distinct and inside the polygon", self.id));
        }
        if !(self.v_stop > 0.0) {
            return Err(format!("zone {}: v_stop must be positive", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueMeasurement {
    pub count: u32,
    pub occupancy: f64,
    pub length_m: f64,
    pub ts_ms: i64,
}

/// Measure one zone. Tracks without a speed estimate count as stopped.
pub fn queue_measure(
    zone: &QueueZoneSpec,
    tracks: &[TrackSnapshot],
    speeds: &BTreeMap<u64, f64>,
    h: &Homography,
    ts_ms: i64,
) -> Result<QueueMeasurement, GeometryError> {
    let zone_area = zone.polygon.area();
    let mut covered = 0.0;
    let mut count = 0u32;
    let mut length: f64 = 0.0;

    let (a0, a1) = zone.axis_points();
    let w0 = h.project(a0)?;
    let w1 = h.project(a1)?;
    let dir = w1.sub(w0);
    let unit = dir.scale(1.0 / dir.norm());

    for t in tracks {
        let inter = zone.polygon.intersection_area(&t.bbox);
        covered += inter;
        if overlap_fraction(&zone.polygon, &t.bbox) < ZONE_OVERLAP_MIN {
            continue;
        }
        let speed = speeds.get(&t.id).copied().unwrap_or(0.0);
        if speed >= zone.v_stop {
            continue;
        }
        count += 1;
        let ground = h.project(t.bbox.bottom_center())?;
        length = length.max(ground.sub(w0).dot(unit));
    }

    Ok(QueueMeasurement {
        count,
        occupancy: (covered / zone_area).clamp(0.0, 1.0),
        length_m: length.max(0.0),
        ts_ms,
    })
}
