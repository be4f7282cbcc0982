//! Scenario description: junction geometry, demand, signals and camera.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use xroads_core::analytics::{LoopSpec, QueueZoneSpec};
use xroads_core::od::Movement;
use xroads_core::protocol::scene::SceneConfig;
use xroads_core::protocol::FORMAT_VERSION;
use xroads_core::{ClassSet, Gate, Homography, TrackerConfig};

use crate::noise::NoiseParams;
use crate::path::Polyline;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub camera_id: String,
    /// `[width, height]` in pixels.
    pub image_size: [u32; 2],
    pub world_to_pixel: Homography,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleClass {
    /// Must be a member of the scenario's class set.
    pub name: String,
    pub length_m: f64,
    pub width_m: f64,
    /// Desired speed drawn uniformly from `[lo, hi]` m/s.
    pub speed_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    /// Movement id from the scene; used for ground-truth OD.
    pub movement: String,
    /// Relative choice weight among the approach's routes.
    pub share: f64,
    pub path: Polyline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approach {
    pub id: String,
    /// Arc length of the stop line along every route of this approach.
    pub stop_s: f64,
    /// Arrival rate per class, vehicles per second.
    pub rates: BTreeMap<String, f64>,
    pub routes: Vec<Route>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPhase {
    pub approaches: Vec<String>,
    pub green_s: f64,
    pub yellow_s: f64,
    pub all_red_s: f64,
}

/// Fixed-time plan; phases run in order and the cycle repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub phases: Vec<SignalPhase>,
    #[serde(default)]
    pub offset_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aspect {
    Green,
    Yellow,
    Red,
}

impl SignalPlan {
    pub fn cycle_s(&self) -> f64 {
        self.phases.iter().map(|p| p.green_s + p.yellow_s + p.all_red_s).sum()
    }

    /// Aspect shown to `approach` at time `t` seconds.
    pub fn aspect(&self, approach: &str, t: f64) -> Aspect {
        let cycle = self.cycle_s();
        let mut u = (t - self.offset_s).rem_euclid(cycle);
        for p in &self.phases {
            let len = p.green_s + p.yellow_s + p.all_red_s;
            if u < len {
                if !p.approaches.iter().any(|a| a == approach) {
                    return Aspect::Red;
                }
                return if u < p.green_s {
                    Aspect::Green
                } else if u < p.green_s + p.yellow_s {
                    Aspect::Yellow
                } else {
                    Aspect::Red
                };
            }
            u -= len;
        }
        Aspect::Red
    }
}

/// Detector geometry in image pixels, shared with the analytics engine.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub loops: Vec<LoopSpec>,
    #[serde(default)]
    pub zones: Vec<QueueZoneSpec>,
    #[serde(default)]
    pub gates: Vec<Gate>,
    #[serde(default)]
    pub movements: Vec<Movement>,
    /// Tracker tuning handed to the analytics scene.
    #[serde(default)]
    pub tracker: TrackerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format_version: u64,
    pub name: String,
    pub duration_s: f64,
    pub fps: f64,
    /// Timestamp of frame 0.
    #[serde(default)]
    pub start_ms: i64,
    pub camera: Camera,
    pub class_set: String,
    pub vehicle_classes: Vec<VehicleClass>,
    pub approaches: Vec<Approach>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
    #[serde(default)]
    pub scene: SceneSpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn classes(&self) -> Result<ClassSet, SimError> {
        ClassSet::preset(&self.class_set).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.fps).round().max(0.0) as u64
    }

    pub fn ts_ms(&self, frame: u64) -> i64 {
        self.start_ms + (frame as f64 * 1000.0 / self.fps).round() as i64
    }

    /// The analytics configuration matching this scenario's camera and detectors.
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            format_version: FORMAT_VERSION,
            camera_id: self.camera.camera_id.clone(),
            image_size: self.camera.image_size,
            homography: self.camera.world_to_pixel.inverse(),
            fps: self.fps,
            class_set: self.class_set.clone(),
            loops: self.scene.loops.clone(),
            zones: self.scene.zones.clone(),
            gates: self.scene.gates.clone(),
            movements: self.scene.movements.clone(),
            tracker: self.scene.tracker.clone(),
            tsc: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return bad("duration_s must be non-negative".into());
        }
        let h = &self.camera.world_to_pixel;
        if !(h.det().abs() > 1e-12 && h.inverse().det().is_finite()) {
            return bad("camera homography is not invertible".into());
        }
        let classes = self.classes()?;
        let mut known = BTreeSet::new();
        for vc in &self.vehicle_classes {
            if classes.id(&vc.name).is_none() {
                return bad(format!("vehicle class {} is not in class set {}", vc.name, self.class_set));
            }
            if !known.insert(vc.name.as_str()) {
                return bad(format!("duplicate vehicle class {}", vc.name));
            }
            if !(vc.length_m > 0.0 && vc.width_m > 0.0) {
                return bad(format!("{}: footprint must be positive", vc.name));
            }
            let [lo, hi] = vc.speed_range;
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{}: speed range must satisfy 0 < lo <= hi", vc.name));
            }
        }
        let movement_ids: BTreeSet<&str> = self.scene.movements.iter().map(|m| m.id.as_str()).collect();
        let mut approach_ids = BTreeSet::new();
        for a in &self.approaches {
            if !approach_ids.insert(a.id.as_str()) {
                return bad(format!("duplicate approach {}", a.id));
            }
            if a.routes.is_empty() {
                return bad(format!("approach {} has no routes", a.id));
            }
            for (cls, rate) in &a.rates {
                if !known.contains(cls.as_str()) {
                    return bad(format!("approach {}: unknown vehicle class {cls}", a.id));
                }
                if !(rate.is_finite() && *rate >= 0.0) {
                    return bad(format!("approach {}: rates must be >= 0", a.id));
                }
            }
            if a.routes.iter().map(|r| r.share).sum::<f64>() <= 0.0 || a.routes.iter().any(|r| !(r.share >= 0.0)) {
                return bad(format!("approach {}: route shares must be >= 0 with a positive sum", a.id));
            }
            for r in &a.routes {
                if !(a.stop_s > 0.0 && a.stop_s < r.path.length()) {
                    return bad(format!("approach {}: route {} does not reach its stop line", a.id, r.movement));
                }
                if !movement_ids.contains(r.movement.as_str()) {
                    return bad(format!("approach {}: unknown movement {}", a.id, r.movement));
                }
            }
        }
        if let Some(plan) = &self.signal {
            if plan.phases.is_empty() || !(plan.cycle_s() > 0.0) {
                return bad("signal plan needs phases with positive total length".into());
            }
            for p in &plan.phases {
                if p.green_s < 0.0 || p.yellow_s < 0.0 || p.all_red_s < 0.0 {
                    return bad("signal phase durations must be >= 0".into());
                }
                for a in &p.approaches {
                    if !approach_ids.contains(a.as_str()) {
                        return bad(format!("signal plan references unknown approach {a}"));
                    }
                }
            }
        }
        if let Some(n) = &self.noise {
            n.validate(classes.len())?;
        }
        self.scene_config()
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_time_aspects() {
        let plan = SignalPlan {
            phases: vec![
                SignalPhase { approaches: vec!["A".into()], green_s: 10.0, yellow_s: 3.0, all_red_s: 2.0 },
                SignalPhase { approaches: vec!["B".into()], green_s: 5.0, yellow_s: 3.0, all_red_s: 2.0 },
            ],
            offset_s: 0.0,
        };
        assert_eq!(plan.cycle_s(), 25.0);
        assert_eq!(plan.aspect("A", 0.0), Aspect::Green);
        assert_eq!(plan.aspect("A", 11.0), Aspect::Yellow);
        assert_eq!(plan.aspect("A", 14.0), Aspect::Red);
        assert_eq!(plan.aspect("B", 15.0), Aspect::Green);
        assert_eq!(plan.aspect("B", 5.0), Aspect::Red);
        assert_eq!(plan.aspect("A", 25.0), Aspect::Green);
    }
}
