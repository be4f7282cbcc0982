//! Multi-object tracker: Kalman prediction, IoU association, track lifecycle.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{greedy_max, hungarian, Matrix};
use crate::geometry::iou;
use crate::kalman::{KalmanError, KalmanModel, TrackState};
use crate::model::{ClassId, FramePacket, PathSample};
use crate::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("frame {got} is not after last processed frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error("invalid tracker config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationMethod {
    #[default]
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub iou_min: f64,
    pub n_init: u32,
    pub max_age: u32,
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_size: f64,
    pub r: f64,
    pub init_vel_var: f64,
    pub history_capacity: usize,
    pub association: AssociationMethod,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_min: 0.3,
            n_init: 3,
            max_age: 15,
            q_pos: 1.0,
            q_vel: 0.25,
            q_size: 1.0,
            r: 4.0,
            init_vel_var: 100.0,
            history_capacity: 128,
            association: AssociationMethod::Hungarian,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: &str| Err(TrackerError::Config(m.to_string()));
        if !(self.iou_min > 0.0 && self.iou_min < 1.0) {
            return bad("iou_min must be in (0, 1)");
        }
        if self.n_init < 1 || self.max_age < 1 {
            return bad("n_init and max_age must be >= 1");
        }
        let noise = [self.q_pos, self.q_vel, self.q_size, self.r, self.init_vel_var];
        if noise.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("noise scales must be positive");
        }
        if self.history_capacity == 0 {
            return bad("history_capacity must be >= 1");
        }
        Ok(())
    }

    pub fn kalman(&self) -> KalmanModel<f64> {
        KalmanModel {
            q_pos: self.q_pos,
            q_vel: self.q_vel,
            q_size: self.q_size,
            r: self.r,
            init_vel_var: self.init_vel_var,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: TrackState<f64>,
    pub status: TrackStatus,
    pub hits: u32,
    pub misses: u32,
    pub class_votes: BTreeMap<ClassId, u32>,
    /// Matched detections, newest last.
    pub history: VecDeque<PathSample>,
    pub born_frame: u64,
}

impl Track {
    /// Majority-vote class; ties go to the lowest class id.
    pub fn class(&self) -> ClassId {
        let mut best = (ClassId(0), 0u32);
        for (&c, &n) in &self.class_votes {
            if n > best.1 {
                best = (c, n);
            }
        }
        best.0
    }

    fn push_history(&mut self, s: PathSample, cap: usize) {
        if self.history.len() == cap {
            self.history.pop_front();
        }
        self.history.push_back(s);
    }

    pub fn snapshot(&self) -> TrackSnapshot {
        TrackSnapshot {
            id: self.id,
            class: self.class(),
            bbox: self.state.bbox(),
            velocity: self.state.velocity(),
            measurement: if self.misses == 0 { self.history.back().copied() } else { None },
        }
    }
}

/// Immutable view of a confirmed track after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub id: u64,
    pub class: ClassId,
    pub bbox: BBox,
    /// px / frame
    pub velocity: (f64, f64),
    /// Detection associated this frame; `None` while coasting.
    pub measurement: Option<PathSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrackEvent {
    Born { id: u64, frame: u64 },
    Confirmed { id: u64, frame: u64 },
    /// `was_confirmed` is false for tentative tracks dropped after a miss.
    Lost { id: u64, frame: u64, was_confirmed: bool },
}

#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub snapshots: Vec<TrackSnapshot>,
    pub events: Vec<TrackEvent>,
    /// Confirmed tracks that turned `Lost` this step.
    pub retired: Vec<Track>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
}

/// One-to-one association maximizing total IoU, then gated at `iou_min`.
pub fn associate(
    predicted: &[BBox],
    dets: &[BBox],
    iou_min: f64,
    method: AssociationMethod,
) -> Association {
    let scores = Matrix::from_fn(predicted.len(), dets.len(), |t, d| iou(&predicted[t], &dets[d]));
    let raw = match method {
        AssociationMethod::Hungarian => {
            let costs = Matrix::from_fn(predicted.len(), dets.len(), |t, d| 1.0 - scores.get(t, d));
            hungarian(&costs)
        }
        AssociationMethod::Greedy => greedy_max(&scores),
    };
    let mut out = Association::default();
    let mut det_used = vec![false; dets.len()];
    for (t, d) in raw.iter().enumerate() {
        match d {
            Some(d) if scores.get(t, *d) >= iou_min => {
                out.matches.push((t, *d));
                det_used[*d] = true;
            }
            _ => out.unmatched_tracks.push(t),
        }
    }
    out.unmatched_dets = (0..dets.len()).filter(|&d| !det_used[d]).collect();
    out
}

/// Tracker for one camera stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    model: KalmanModel<f64>,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        Ok(Self {
            model: cfg.kalman(),
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Live (tentative and confirmed) tracks in id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(&mut self, pkt: &FramePacket) -> Result<StepOutput, TrackerError> {
        if let Some(last) = self.last_frame {
            if pkt.frame <= last {
                return Err(TrackerError::OutOfOrderFrame { last, got: pkt.frame });
            }
        }
        let dt = self.last_frame.map_or(1, |last| pkt.frame - last) as f64;

        for t in &mut self.tracks {
            t.state = self.model.predict(&t.state, dt);
        }

        let predicted: Vec<BBox> = self.tracks.iter().map(|t| t.state.bbox()).collect();
        let boxes: Vec<BBox> = pkt.detections.iter().map(|d| d.bbox).collect();
        let assoc = associate(&predicted, &boxes, self.cfg.iou_min, self.cfg.association);

        let mut out = StepOutput::default();
        for &(ti, di) in &assoc.matches {
            let det = &pkt.detections[di];
            let track = &mut self.tracks[ti];
            track.state = self.model.update(&track.state, &det.bbox)?;
            track.hits += 1;
            track.misses = 0;
            *track.class_votes.entry(det.cls).or_insert(0) += 1;
            track.push_history(
                PathSample {
                    frame: pkt.frame,
                    ts_ms: pkt.ts_ms,
                    bbox: det.bbox,
                },
                self.cfg.history_capacity,
            );
            if track.status == TrackStatus::Tentative && track.hits >= self.cfg.n_init {
                track.status = TrackStatus::Confirmed;
                out.events.push(TrackEvent::Confirmed { id: track.id, frame: pkt.frame });
            }
        }

        for &ti in &assoc.unmatched_tracks {
            let track = &mut self.tracks[ti];
            track.misses += 1;
            track.hits = 0;
            let lose = match track.status {
                TrackStatus::Tentative => true,
                TrackStatus::Confirmed => track.misses > self.cfg.max_age,
                TrackStatus::Lost => false,
            };
            if lose {
                out.events.push(TrackEvent::Lost {
                    id: track.id,
                    frame: pkt.frame,
                    was_confirmed: track.status == TrackStatus::Confirmed,
                });
                track.status = TrackStatus::Lost;
            }
        }

        for &di in &assoc.unmatched_dets {
            let det = &pkt.detections[di];
            let id = self.next_id;
            self.next_id += 1;
            let mut track = Track {
                id,
                state: self.model.initiate(&det.bbox),
                status: TrackStatus::Tentative,
                hits: 1,
                misses: 0,
                class_votes: BTreeMap::from([(det.cls, 1)]),
                history: VecDeque::with_capacity(self.cfg.history_capacity.min(256)),
                born_frame: pkt.frame,
            };
            track.push_history(
                PathSample {
                    frame: pkt.frame,
                    ts_ms: pkt.ts_ms,
                    bbox: det.bbox,
                },
                self.cfg.history_capacity,
            );
            out.events.push(TrackEvent::Born { id, frame: pkt.frame });
            if self.cfg.n_init <= 1 {
                track.status = TrackStatus::Confirmed;
                out.events.push(TrackEvent::Confirmed { id, frame: pkt.frame });
            }
            self.tracks.push(track);
        }

        let retiring: Vec<u64> = out
            .events
            .iter()
            .filter_map(|e| match e {
                TrackEvent::Lost { id, was_confirmed: true, .. } => Some(*id),
                _ => None,
            })
            .collect();
        let (live, lost): (Vec<Track>, Vec<Track>) = self
            .tracks
            .drain(..)
            .partition(|t| t.status != TrackStatus::Lost);
        self.tracks = live;
        out.retired = lost.into_iter().filter(|t| retiring.contains(&t.id)).collect();

        out.snapshots = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .map(Track::snapshot)
            .collect();
        self.last_frame = Some(pkt.frame);
        Ok(out)
    }

    /// Ends the stream: every confirmed track still alive is returned.
    pub fn finish(&mut self) -> Vec<Track> {
        self.tracks
            .drain(..)
            .filter(|t| t.status == TrackStatus::Confirmed)
            .collect()
    }
}
