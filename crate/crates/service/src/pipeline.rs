//! Per-camera analytics pipeline: packets in, events and live state out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xroads_core::analytics::{
    queue_measure, LoopSpec, PresenceEdge, QueueMeasurement, QueueZoneSpec, SpeedEstimator, TrackSpeed, VirtualLoop,
};
use xroads_core::od::classify_trajectory;
use xroads_core::protocol::{PresenceMessage, SceneConfig, Signal, TscController};
use xroads_core::store::{EventKind, TrafficEvent};
use xroads_core::tracker::{Track, TrackEvent, TrackerError};
use xroads_core::{BBox, ClassId, ClassSet, FramePacket, Gate, PathSample, Tracker, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid scene: {0}")]
    Config(String),
    #[error("packet for camera {got} sent to pipeline {expected}")]
    Camera { expected: String, got: String },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Loop,
    Zone,
    Gate,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Loop => "loop",
            DetectorKind::Zone => "zone",
            DetectorKind::Gate => "gate",
        }
    }
}

/// A runtime change to the detectors of one scene.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneEdit {
    PutLoop(LoopSpec),
    PutZone(QueueZoneSpec),
    PutGate(Gate),
    Delete { kind: DetectorKind, id: String },
}

impl SceneEdit {
    pub fn id(&self) -> &str {
        match self {
            SceneEdit::PutLoop(l) => &l.id,
            SceneEdit::PutZone(z) => &z.id,
            SceneEdit::PutGate(g) => &g.id,
            SceneEdit::Delete { id, .. } => id,
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            SceneEdit::PutLoop(_) => DetectorKind::Loop,
            SceneEdit::PutZone(_) => DetectorKind::Zone,
            SceneEdit::PutGate(_) => DetectorKind::Gate,
            SceneEdit::Delete { kind, .. } => *kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveTrack {
    pub id: u64,
    pub class: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveLoop {
    pub id: String,
    pub presence: bool,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveZone {
    pub id: String,
    pub queue: QueueMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSignal {
    pub approach: String,
    pub signal: Signal,
}

/// Everything the pipeline knows after one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveFrameState {
    pub camera_id: String,
    pub frame: u64,
    pub ts_ms: i64,
    pub tracks: Vec<LiveTrack>,
    pub loops: Vec<LiveLoop>,
    pub zones: Vec<LiveZone>,
    pub signals: Vec<LiveSignal>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: String,
    pub dest: String,
    pub count: u64,
}

/// End-of-stream totals for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub camera_id: String,
    pub packets: u64,
    pub tracks: u64,
    pub loop_counts: BTreeMap<String, u64>,
    pub od: Vec<OdPair>,
    pub unassigned: u64,
}

#[derive(Debug, Clone, Default)]
pub struct StepResult {
    pub live: Option<LiveFrameState>,
    pub events: Vec<TrafficEvent>,
    pub presence: Vec<PresenceMessage>,
    pub trajectories: Vec<TrajectoryRecord>,
}

/// Encoding of a signal in `PhaseChange` event values.
fn signal_value(s: Signal) -> f64 {
    match s {
        Signal::Green => 0.0,
        Signal::Yellow => 1.0,
        Signal::Red => 2.0,
    }
}

#[derive(Debug, Default)]
struct TrackAcc {
    path: Vec<PathSample>,
    speed: TrackSpeed,
}

#[derive(Debug)]
pub struct Pipeline {
    scene: SceneConfig,
    classes: ClassSet,
    tracker: Tracker,
    loops: Vec<VirtualLoop>,
    speed: SpeedEstimator,
    tracks: BTreeMap<u64, TrackAcc>,
    tsc: Option<TscController>,
    last_ts: Option<i64>,
    packets: u64,
    finished_tracks: u64,
    od: BTreeMap<(String, String), u64>,
    unassigned: u64,
    queue_period: u64,
    frames_to_queue_sample: u64,
}

impl Pipeline {
    pub fn new(scene: SceneConfig) -> Result<Self, PipelineError> {
        scene.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let classes = scene.classes().map_err(|e| PipelineError::Config(e.to_string()))?;
        let tracker = Tracker::new(scene.tracker.clone()).map_err(|e| PipelineError::Config(e.to_string()))?;
        let loops = scene.loops.iter().cloned().map(VirtualLoop::new).collect();
        let speed = SpeedEstimator::new(scene.homography, scene.fps);
        let queue_period = scene.fps.round().max(1.0) as u64;
        Ok(Self {
            classes,
            tracker,
            loops,
            speed,
            tracks: BTreeMap::new(),
            tsc: None,
            last_ts: None,
            packets: 0,
            finished_tracks: 0,
            od: BTreeMap::new(),
            unassigned: 0,
            queue_period,
            frames_to_queue_sample: 0,
            scene,
        })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn camera_id(&self) -> &str {
        &self.scene.camera_id
    }

    pub fn packets(&self) -> u64 {
        self.packets
    }

    pub fn last_ts(&self) -> Option<i64> {
        self.last_ts
    }

    fn class_name(&self, c: ClassId) -> String {
        self.classes.name(c).unwrap_or("unknown").to_string()
    }

    fn event(&self, kind: EventKind, detector: &str, class: Option<String>, value: f64, ts_ms: i64) -> TrafficEvent {
        TrafficEvent {
            kind,
            camera_id: self.scene.camera_id.clone(),
            detector: detector.to_string(),
            class,
            value,
            ts_ms,
        }
    }

    /// Processes one packet. Out-of-order packets are rejected without
    /// touching any state.
    pub fn step(&mut self, pkt: &FramePacket) -> Result<StepResult, PipelineError> {
        self.step_with(pkt, true)
    }

    /// As [`Pipeline::step`], optionally skipping the live snapshot.
    pub fn step_with(&mut self, pkt: &FramePacket, live: bool) -> Result<StepResult, PipelineError> {
        if pkt.camera_id != self.scene.camera_id {
            return Err(PipelineError::Camera {
                expected: self.scene.camera_id.clone(),
                got: pkt.camera_id.clone(),
            });
        }
        let out = self.tracker.step(pkt)?;
        self.packets += 1;
        let mut res = StepResult::default();

        for e in &out.events {
            if let TrackEvent::Confirmed { id, .. } = e {
                let history: Vec<PathSample> = self
                    .tracker
                    .tracks()
                    .iter()
                    .find(|t| t.id == *id)
                    .map(|t| t.history.iter().copied().collect())
                    .unwrap_or_default();
                let mut acc = TrackAcc::default();
                for s in &history {
                    // Projection failures leave the speed unset; the path is still kept.
                    let _ = acc.speed.push(&self.speed, s.frame, &s.bbox);
                }
                acc.path = history;
                self.tracks.insert(*id, acc);
            }
        }
        for s in &out.snapshots {
            let Some(m) = s.measurement else { continue };
            let acc = self.tracks.entry(s.id).or_default();
            if acc.path.last().map_or(true, |l| l.frame < m.frame) {
                acc.path.push(m);
                let _ = acc.speed.push(&self.speed, m.frame, &m.bbox);
            }
        }
        for t in out.retired {
            if let Some(rec) = self.finalize(&t) {
                res.trajectories.push(rec);
            }
        }

        let ts = pkt.ts_ms;
        let speeds: BTreeMap<u64, f64> = out
            .snapshots
            .iter()
            .filter_map(|s| Some((s.id, self.tracks.get(&s.id)?.speed.current(&self.speed).ok()?)))
            .collect();

        for i in 0..self.loops.len() {
            let step = self.loops[i].step(&out.snapshots);
            let id = self.loops[i].id().to_string();
            for c in step.counts {
                let class = self.class_name(c.class);
                res.events.push(self.event(EventKind::Count, &id, Some(class.clone()), 1.0, ts));
                if let Some(v) = speeds.get(&c.track_id) {
                    res.events.push(self.event(EventKind::SpeedSample, &id, Some(class), *v, ts));
                }
            }
            for edge in step.edges {
                let state = edge == PresenceEdge::Rising;
                res.events
                    .push(self.event(EventKind::PresenceEdge, &id, None, f64::from(u8::from(state)), ts));
                res.presence.push(PresenceMessage { loop_id: id.clone(), state, ts_ms: ts });
            }
        }

        if let Some(tsc) = &mut self.tsc {
            let dt = self.last_ts.map_or(0, |last| (ts - last).max(0) as u64);
            let changes = tsc.step(dt);
            for m in &res.presence {
                tsc.apply(m);
            }
            for c in changes {
                res.events.push(TrafficEvent {
                    kind: EventKind::PhaseChange,
                    camera_id: self.scene.camera_id.clone(),
                    detector: c.approach,
                    class: None,
                    value: signal_value(c.signal),
                    ts_ms: ts,
                });
            }
        } else if let Some(plan) = self.scene.tsc.as_ref().and_then(|t| t.plan.clone()) {
            let mut tsc = TscController::new(plan, ts).map_err(PipelineError::Config)?;
            for m in &res.presence {
                tsc.apply(m);
            }
            self.tsc = Some(tsc);
        }

        let sample_queues = self.frames_to_queue_sample == 0;
        self.frames_to_queue_sample = if sample_queues { self.queue_period - 1 } else { self.frames_to_queue_sample - 1 };
        let mut zones = Vec::new();
        if live || sample_queues {
            for z in &self.scene.zones {
                let Ok(q) = queue_measure(z, &out.snapshots, &speeds, &self.scene.homography, ts) else {
                    continue;
                };
                if sample_queues {
                    res.events.push(self.event(EventKind::QueueSample, &z.id, None, q.length_m, ts));
                    res.events.push(self.event(EventKind::Occupancy, &z.id, None, q.occupancy, ts));
                }
                zones.push(LiveZone { id: z.id.clone(), queue: q });
            }
        }
        self.last_ts = Some(ts);

        if live {
            res.live = Some(LiveFrameState {
                camera_id: self.scene.camera_id.clone(),
                frame: pkt.frame,
                ts_ms: ts,
                tracks: out
                    .snapshots
                    .iter()
                    .map(|s| LiveTrack {
                        id: s.id,
                        class: self.class_name(s.class),
                        bbox: s.bbox,
                        speed_mps: speeds.get(&s.id).copied(),
                    })
                    .collect(),
                loops: self.live_loops(),
                zones,
                signals: self.live_signals(),
            });
        }
        Ok(res)
    }

    fn live_loops(&self) -> Vec<LiveLoop> {
        self.loops
            .iter()
            .map(|l| LiveLoop {
                id: l.id().to_string(),
                presence: l.presence(),
                count: l.total(),
            })
            .collect()
    }

    fn live_signals(&self) -> Vec<LiveSignal> {
        match (&self.tsc, self.scene.tsc.as_ref().and_then(|t| t.plan.as_ref())) {
            (Some(tsc), Some(plan)) => plan
                .approaches
                .iter()
                .zip(tsc.signals())
                .map(|(a, signal)| LiveSignal { approach: a.id.clone(), signal })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Builds the trajectory of a confirmed track and assigns its movement.
    fn finalize(&mut self, t: &Track) -> Option<TrajectoryRecord> {
        let (path, mean_speed) = match self.tracks.remove(&t.id) {
            Some(acc) if !acc.path.is_empty() => (acc.path, acc.speed.mean(self.scene.fps)),
            _ => (t.history.iter().copied().collect(), None),
        };
        let mut rec = TrajectoryRecord::from_path(t.id, self.scene.camera_id.clone(), self.class_name(t.class()), path)?;
        rec.mean_speed_mps = mean_speed;
        self.finished_tracks += 1;
        match classify_trajectory(&rec, &self.scene.gates, &self.scene.movements) {
            Some((m, _)) => {
                rec.movement = Some(m.id.clone());
                *self.od.entry((m.origin_gate.clone(), m.dest_gate.clone())).or_insert(0) += 1;
            }
            None => self.unassigned += 1,
        }
        Some(rec)
    }

    /// Mean ground speed of a live track so far (m/s).
    pub fn track_mean_speed(&self, id: u64) -> Option<f64> {
        self.tracks.get(&id)?.speed.mean(self.scene.fps)
    }

    /// Ends the stream: every live confirmed track becomes a trajectory.
    pub fn finish(&mut self) -> (Vec<TrajectoryRecord>, RunSummary) {
        let remaining = self.tracker.finish();
        let recs = remaining.iter().filter_map(|t| self.finalize(t)).collect();
        (recs, self.summary())
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            camera_id: self.scene.camera_id.clone(),
            packets: self.packets,
            tracks: self.finished_tracks,
            loop_counts: self.loops.iter().map(|l| (l.id().to_string(), l.total())).collect(),
            od: self
                .od
                .iter()
                .map(|((o, d), n)| OdPair { origin: o.clone(), dest: d.clone(), count: *n })
                .collect(),
            unassigned: self.unassigned,
        }
    }

    /// Applies a detector edit and returns its journal event. A replaced
    /// loop starts again from a zero count.
    pub fn apply_edit(&mut self, edit: &SceneEdit, ts_ms: i64) -> Result<TrafficEvent, EditError> {
        let id = edit.id().to_string();
        let kind = edit.kind();
        if id.is_empty() {
            return Err(EditError::Invalid("detector id must not be empty".into()));
        }
        if let Some(other) = self.scene.detector_kind(&id) {
            if other != kind.as_str() {
                return Err(EditError::Conflict(format!("id {id} is already used by a {other}")));
            }
        }
        let mut next = self.scene.clone();
        let value = match edit {
            SceneEdit::PutLoop(spec) => {
                upsert(&mut next.loops, spec.clone(), |l| &l.id);
                1.0
            }
            SceneEdit::PutZone(spec) => {
                upsert(&mut next.zones, spec.clone(), |z| &z.id);
                1.0
            }
            SceneEdit::PutGate(g) => {
                upsert(&mut next.gates, g.clone(), |g| &g.id);
                1.0
            }
            SceneEdit::Delete { kind, id } => {
                let removed = match kind {
                    DetectorKind::Loop => remove(&mut next.loops, id, |l| &l.id),
                    DetectorKind::Zone => remove(&mut next.zones, id, |z| &z.id),
                    DetectorKind::Gate => {
                        if let Some(m) = next.movements.iter().find(|m| m.origin_gate == *id || m.dest_gate == *id) {
                            return Err(EditError::Conflict(format!("gate {id} is used by movement {}", m.id)));
                        }
                        remove(&mut next.gates, id, |g| &g.id)
                    }
                };
                if !removed {
                    return Err(EditError::NotFound(format!("no {} with id {id}", kind.as_str())));
                }
                0.0
            }
        };
        next.validate().map_err(|e| EditError::Invalid(e.to_string()))?;
        if kind == DetectorKind::Loop {
            match edit {
                SceneEdit::PutLoop(spec) => {
                    let fresh = VirtualLoop::new(spec.clone());
                    match self.loops.iter_mut().find(|l| l.id() == id) {
                        Some(l) => *l = fresh,
                        None => self.loops.push(fresh),
                    }
                }
                _ => self.loops.retain(|l| l.id() != id),
            }
        }
        self.scene = next;
        Ok(self.event(EventKind::SceneEdit, &id, None, value, ts_ms))
    }
}

fn upsert<T>(items: &mut Vec<T>, item: T, id: impl Fn(&T) -> &String) {
    match items.iter().position(|x| id(x) == id(&item)) {
        Some(i) => items[i] = item,
        None => items.push(item),
    }
}

fn remove<T>(items: &mut Vec<T>, target: &str, id: impl Fn(&T) -> &String) -> bool {
    let before = items.len();
    items.retain(|x| id(x) != target);
    items.len() != before
}

/// Runs a whole packet stream through a fresh pipeline.
pub fn run_packets(
    scene: SceneConfig,
    packets: &[FramePacket],
) -> Result<(Vec<TrafficEvent>, Vec<TrajectoryRecord>, RunSummary), PipelineError> {
    let mut p = Pipeline::new(scene)?;
    let mut events = Vec::new();
    let mut trajectories = Vec::new();
    for pkt in packets {
        let r = p.step_with(pkt, false)?;
        events.extend(r.events);
        trajectories.extend(r.trajectories);
    }
    let (rest, summary) = p.finish();
    trajectories.extend(rest);
    Ok((events, trajectories, summary))
}
