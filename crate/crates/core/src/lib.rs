//! Intersection analytics engine.
//!
//! Turns per-frame vehicle detections into confirmed tracks, virtual-loop
//! presence and counts, queue measurements, calibrated speeds, gate
//! crossings and origin–destination matrices, and persists the resulting
//! events in an append-only, time-bucketed store.
//!
//! The geometric and filtering kernels are generic over [`Scalar`]
//! (`f32`/`f64`). The aliases at the crate root fix them to `f64`, which is
//! what the rest of the engine uses; `f32` aliases live in [`single`].

pub mod analytics;
pub mod assignment;
pub mod geometry;
pub mod kalman;
pub mod model;
pub mod od;
pub mod protocol;
pub mod scalar;
pub mod store;
pub mod tracker;

pub use scalar::Scalar;

pub type Point = geometry::Point<f64>;
pub type BBox = geometry::BBox<f64>;
pub type Polygon = geometry::Polygon<f64>;
pub type Gate = geometry::Gate<f64>;
pub type Homography = geometry::Homography<f64>;
pub type TrackState = kalman::TrackState<f64>;
pub type KalmanModel = kalman::KalmanModel<f64>;

pub use geometry::{gate_crossing, iou, overlap_fraction, project, Crossing, GeometryError};
pub use model::{ClassId, ClassSet, Detection, FramePacket, PathSample, TrajectoryRecord};
pub use tracker::{TrackSnapshot, Tracker, TrackerConfig};

/// Single-precision aliases.
pub mod single {
    pub type Point = crate::geometry::Point<f32>;
    pub type BBox = crate::geometry::BBox<f32>;
    pub type Polygon = crate::geometry::Polygon<f32>;
    pub type Gate = crate::geometry::Gate<f32>;
    pub type Homography = crate::geometry::Homography<f32>;
    pub type TrackState = crate::kalman::TrackState<f32>;
    pub type KalmanModel = crate::kalman::KalmanModel<f32>;
}
