//! Scene-geometry analytics over confirmed tracks.

pub mod loops;
pub mod queue;
pub mod speed;

pub use loops::{CountEvent, LoopSpec, LoopStepOutput, OccupancyCriterion, PresenceEdge, VirtualLoop};
pub use queue::{queue_measure, QueueMeasurement, QueueZoneSpec};
pub use speed::{SpeedError, SpeedEstimator, TrackSpeed};
