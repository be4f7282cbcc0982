//! Ground-plane speed from bottom-center track history.

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::model::PathSample;
use crate::{BBox, Homography, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("not enough samples yet")]
    NotReady,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEstimator {
    /// Pixel → ground plane (meters).
    pub homography: Homography,
    pub fps: f64,
    pub ema_alpha: f64,
    /// Per-step samples required before a reading is reported.
    pub warmup: u32,
}

impl SpeedEstimator {
    pub fn new(homography: Homography, fps: f64) -> Self {
        Self {
            homography,
            fps,
            ema_alpha: 0.3,
            warmup: 5,
        }
    }

    /// Smoothed speed in m/s over an ordered history.
    pub fn estimate(&self, history: &[PathSample]) -> Result<f64, SpeedError> {
        let mut acc = TrackSpeed::default();
        for s in history {
            acc.push(self, s.frame, &s.bbox)?;
        }
        acc.current(self)
    }
}

/// Incremental per-track speed state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrackSpeed {
    last: Option<(u64, Point)>,
    ema: Option<f64>,
    samples: u32,
    distance_m: f64,
    elapsed_frames: u64,
}

impl TrackSpeed {
    pub fn push(&mut self, est: &SpeedEstimator, frame: u64, bbox: &BBox) -> Result<(), SpeedError> {
        let ground = est.homography.project(bbox.bottom_center())?;
        if let Some((f0, g0)) = self.last {
            if frame <= f0 {
                return Ok(());
            }
            let dframes = frame - f0;
            let dist = ground.sub(g0).norm();
            let speed = dist * est.fps / dframes as f64;
            self.ema = Some(match self.ema {
                None => speed,
                Some(e) => est.ema_alpha * speed + (1.0 - est.ema_alpha) * e,
            });
            self.samples += 1;
            self.distance_m += dist;
            self.elapsed_frames += dframes;
        }
        self.last = Some((frame, ground));
        Ok(())
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last.map(|(f, _)| f)
    }

    /// Smoothed speed, once warm.
    pub fn current(&self, est: &SpeedEstimator) -> Result<f64, SpeedError> {
        match self.ema {
            Some(e) if self.samples >= est.warmup => Ok(e),
            _ => Err(SpeedError::NotReady),
        }
    }

    /// Distance over elapsed time since the first sample (m/s).
    pub fn mean(&self, fps: f64) -> Option<f64> {
        (self.elapsed_frames > 0).then(|| self.distance_m * fps / self.elapsed_frames as f64)
    }

    pub fn elapsed_frames(&self) -> u64 {
        self.elapsed_frames
    }
}
