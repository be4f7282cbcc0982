//! Domain records flowing through the engine.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassSetError {
    #[error("class set must not be empty")]
    Empty,
    #[error("duplicate class name {0:?}")]
    Duplicate(String),
    #[error("unknown class set preset {0:?}")]
    UnknownPreset(String),
}

/// Index into the active [`ClassSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u16);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Ordered, duplicate-free list of class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassSet {
    names: Vec<String>,
}

pub const SIX_CLASSES: [&str; 6] = ["Car", "Bus", "Minibus", "Motorcycle", "Person", "Truck"];

pub const TEN_CLASSES: [&str; 10] = [
    "Car",
    "Bus",
    "Minibus",
    "Motorcycle",
    "Person",
    "Taxi",
    "Light Truck",
    "Heavy Truck",
    "Van",
    "Bicycle",
];

impl TryFrom<Vec<String>> for ClassSet {
    type Error = ClassSetError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        ClassSet::new(names)
    }
}

impl From<ClassSet> for Vec<String> {
    fn from(c: ClassSet) -> Self {
        c.names
    }
}

impl ClassSet {
    pub fn new<I, T>(names: I) -> Result<Self, ClassSetError>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ClassSetError::Empty);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ClassSetError::Duplicate(n.clone()));
            }
        }
        Ok(Self { names })
    }

    /// The six-class real-time set.
    pub fn six() -> Self {
        Self::new(SIX_CLASSES).expect("preset is valid")
    }

    /// The ten-class offline set.
    pub fn ten() -> Self {
        Self::new(TEN_CLASSES).expect("preset is valid")
    }

    /// `"six"` / `"ten"` presets.
    pub fn preset(name: &str) -> Result<Self, ClassSetError> {
        match name {
            "six" | "6" => Ok(Self::six()),
            "ten" | "10" => Ok(Self::ten()),
            other => Err(ClassSetError::UnknownPreset(other.to_string())),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name).map(|i| ClassId(i as u16))
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.names.len()).map(|i| ClassId(i as u16))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub cls: ClassId,
    pub score: f64,
    pub bbox: BBox,
}

/// One camera frame worth of detections.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket {
    pub camera_id: String,
    pub frame: u64,
    pub ts_ms: i64,
    pub detections: Vec<Detection>,
}

/// One observed position of a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub frame: u64,
    pub ts_ms: i64,
    pub bbox: BBox,
}

/// Completed trajectory as persisted and fed to OD assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub track_id: u64,
    pub camera_id: String,
    pub class: String,
    pub first_frame: u64,
    pub last_frame: u64,
    pub first_ts_ms: i64,
    pub last_ts_ms: i64,
    pub path: Vec<PathSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movement: Option<String>,
    /// Ground distance over elapsed time along the path (m/s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_speed_mps: Option<f64>,
}

impl TrajectoryRecord {
    /// Builds a record from an ordered, non-empty path.
    pub fn from_path(
        track_id: u64,
        camera_id: impl Into<String>,
        class: impl Into<String>,
        path: Vec<PathSample>,
    ) -> Option<Self> {
        let first = *path.first()?;
        let last = *path.last()?;
        Some(Self {
            track_id,
            camera_id: camera_id.into(),
            class: class.into(),
            first_frame: first.frame,
            last_frame: last.frame,
            first_ts_ms: first.ts_ms,
            last_ts_ms: last.ts_ms,
            path,
            movement: None,
            mean_speed_mps: None,
        })
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
