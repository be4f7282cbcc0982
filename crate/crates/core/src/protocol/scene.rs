//! Per-camera scene configuration: calibration, detectors and movements.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{LoopSpec, QueueZoneSpec};
use crate::model::ClassSet;
use crate::od::Movement;
use crate::tracker::TrackerConfig;
use crate::{Gate, Homography};

use super::tsc::TscPlan;
use super::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scene: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// Where presence edges go and how the controller mock is timed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TscConfig {
    /// `host:port` of the presence receiver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<TscPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub format_version: u64,
    pub camera_id: String,
    /// `[width, height]` in pixels.
    pub image_size: [u32; 2],
    /// Image pixels to ground-plane metres.
    pub homography: Homography,
    pub fps: f64,
    /// Name of a class-set preset (`six` or `ten`).
    pub class_set: String,
    #[serde(default)]
    pub loops: Vec<LoopSpec>,
    #[serde(default)]
    pub zones: Vec<QueueZoneSpec>,
    #[serde(default)]
    pub gates: Vec<Gate>,
    #[serde(default)]
    pub movements: Vec<Movement>,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsc: Option<TscConfig>,
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let s: SceneConfig = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }

    pub fn classes(&self) -> Result<ClassSet, SceneError> {
        ClassSet::preset(&self.class_set).map_err(|e| SceneError::Invalid(e.to_string()))
    }

    /// Which detector kind, if any, already uses `id`.
    pub fn detector_kind(&self, id: &str) -> Option<&'static str> {
        if self.loops.iter().any(|l| l.id == id) {
            Some("loop")
        } else if self.zones.iter().any(|z| z.id == id) {
            Some("zone")
        } else if self.gates.iter().any(|g| g.id == id) {
            Some("gate")
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        if self.camera_id.is_empty() || self.camera_id.contains(['/', '\\']) || self.camera_id.starts_with('.') {
            return bad(format!("camera_id {:?} is not a valid name", self.camera_id));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return bad("image_size must be positive".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        self.classes()?;
        self.tracker
            .validate()
            .map_err(|e| SceneError::Invalid(e.to_string()))?;

        let mut ids = BTreeSet::new();
        for l in &self.loops {
            l.validate().map_err(SceneError::Invalid)?;
            if !ids.insert(l.id.as_str()) {
                return bad(format!("duplicate detector id {}", l.id));
            }
        }
        for z in &self.zones {
            z.validate().map_err(SceneError::Invalid)?;
            if !ids.insert(z.id.as_str()) {
                return bad(format!("duplicate detector id {}", z.id));
            }
        }
        let mut gate_ids = BTreeSet::new();
        for g in &self.gates {
            if g.id.is_empty() || g.id.chars().any(|c| c.is_whitespace() || c == ',') {
                return bad(format!("gate id {:?} must be non-empty without whitespace or commas", g.id));
            }
            if !ids.insert(g.id.as_str()) {
                return bad(format!("duplicate detector id {}", g.id));
            }
            gate_ids.insert(g.id.as_str());
        }
        let mut movement_ids = BTreeSet::new();
        for m in &self.movements {
            if !movement_ids.insert(m.id.as_str()) {
                return bad(format!("duplicate movement id {}", m.id));
            }
            for g in [&m.origin_gate, &m.dest_gate] {
                if !gate_ids.contains(g.as_str()) {
                    return bad(format!("movement {} references unknown gate {g}", m.id));
                }
            }
            if m.origin_gate == m.dest_gate {
                return bad(format!("movement {} has the same origin and destination", m.id));
            }
        }
        if let Some(plan) = self.tsc.as_ref().and_then(|t| t.plan.as_ref()) {
            plan.validate().map_err(SceneError::Invalid)?;
            for a in &plan.approaches {
                for l in &a.loops {
                    if !self.loops.iter().any(|x| &x.id == l) {
                        return bad(format!("signal approach {} references unknown loop {l}", a.id));
                    }
                }
            }
        }
        Ok(())
    }
}
