//! Deterministic synthetic junction traffic with ground truth.
//!
//! A [`Scenario`] describes the junction, demand, signal plan and camera.
//! [`simulate`] turns it into per-frame detection packets plus a
//! [`GroundTruthBundle`]; [`apply_noise`] degrades the packets.

pub mod noise;
pub mod path;
pub mod presets;
pub mod run;
pub mod scenario;
pub mod truth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use noise::{apply_noise, BetaScore, NoiseModel, NoiseParams};
pub use path::Polyline;
pub use run::{simulate, FrameOutput, SimRun, TruthBox};
pub use scenario::{Approach, Aspect, Camera, Route, Scenario, SceneSpec, SignalPhase, SignalPlan, VehicleClass};
pub use truth::{GroundTruthBundle, GtOdCell, GtSample, GtTrack};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub const STREAM_ARRIVALS: u64 = 1;
pub const STREAM_KINEMATICS: u64 = 2;
pub const STREAM_NOISE: u64 = 3;

/// Independent random stream for one subsystem under a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
