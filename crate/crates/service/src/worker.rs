//! One worker thread per camera: reads its source, steps the pipeline and
//! fans results out to the store, the presence emitter and live viewers.

use std::path::PathBuf;
use std::sync::mpsc::{self, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, watch};
use tracing::{info, warn};
use xroads_core::protocol::SceneConfig;
use xroads_core::store::StatsStore;

use crate::emitter::{now_ms, LinkState, PresenceEmitter, TscLink};
use crate::pipeline::{EditError, LiveFrameState, Pipeline, PipelineError, RunSummary, SceneEdit, StepResult};
use crate::source::{InputSpec, PacketSource, SourceError};

pub type SharedStore = Arc<Mutex<StatsStore>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkerStatus {
    Starting,
    Running,
    Draining,
    Stopped,
    Failed,
}

/// Externally visible state of one camera worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineHandle {
    pub camera_id: String,
    pub status: WorkerStatus,
    pub input: String,
    pub tsc: TscLink,
    pub frames_processed: u64,
    pub rejected_records: u64,
    /// Packets per second over the last second of processing.
    pub rate_pps: f64,
    pub last_error: Option<String>,
}

pub struct WorkerConfig {
    pub scene: SceneConfig,
    /// Scene document that accepted edits are written back to.
    pub scene_path: Option<PathBuf>,
    pub input: InputSpec,
    /// Ignore packet timestamps and process as fast as possible.
    pub max_speed: bool,
    /// Presence receiver; falls back to the scene's `tsc.addr`.
    pub tsc_addr: Option<String>,
}

pub enum Command {
    Edit {
        edit: SceneEdit,
        reply: oneshot::Sender<Result<SceneConfig, EditError>>,
    },
    SetRate {
        approach: Option<String>,
        veh_per_s: f64,
        reply: oneshot::Sender<Result<(), String>>,
    },
    /// Ends the input stream early; the worker then drains as usual.
    Stop,
}

/// State shared between a worker thread and API handlers.
pub struct WorkerShared {
    camera_id: String,
    handle: Mutex<PipelineHandle>,
    scene: Mutex<SceneConfig>,
    summary: Mutex<Option<RunSummary>>,
    live: watch::Sender<Option<Arc<LiveFrameState>>>,
    link: Arc<LinkState>,
}

impl WorkerShared {
    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn handle(&self) -> PipelineHandle {
        let mut h = self.handle.lock().expect("handle lock").clone();
        h.tsc = self.link.get();
        h
    }

    pub fn scene(&self) -> SceneConfig {
        self.scene.lock().expect("scene lock").clone()
    }

    pub fn summary(&self) -> Option<RunSummary> {
        self.summary.lock().expect("summary lock").clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<Option<Arc<LiveFrameState>>> {
        self.live.subscribe()
    }

    fn update(&self, f: impl FnOnce(&mut PipelineHandle)) {
        f(&mut self.handle.lock().expect("handle lock"));
    }
}

/// A cloneable reference used by the API to reach a worker.
#[derive(Clone)]
pub struct WorkerRef {
    pub shared: Arc<WorkerShared>,
    pub commands: mpsc::Sender<Command>,
}

pub struct Worker {
    shared: Arc<WorkerShared>,
    commands: mpsc::Sender<Command>,
    thread: JoinHandle<()>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] PipelineError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

impl Worker {
    /// Validates the scene and opens the source before the thread starts,
    /// so configuration errors surface before any packet is read.
    pub fn start(cfg: WorkerConfig, store: SharedStore) -> Result<Self, StartError> {
        let pipeline = Pipeline::new(cfg.scene.clone())?;
        let classes = cfg.scene.classes().map_err(|e| PipelineError::Config(e.to_string()))?;
        let source = PacketSource::open(&cfg.input, classes)?;
        let link = Arc::new(LinkState::default());
        let tsc_addr = cfg
            .tsc_addr
            .clone()
            .or_else(|| cfg.scene.tsc.as_ref().and_then(|t| t.addr.clone()));
        let emitter = tsc_addr.map(|a| PresenceEmitter::spawn(&a, link.clone()));
        let (live, _) = watch::channel(None);
        let shared = Arc::new(WorkerShared {
            camera_id: cfg.scene.camera_id.clone(),
            handle: Mutex::new(PipelineHandle {
                camera_id: cfg.scene.camera_id.clone(),
                status: WorkerStatus::Starting,
                input: cfg.input.to_string(),
                tsc: TscLink::Disabled,
                frames_processed: 0,
                rejected_records: 0,
                rate_pps: 0.0,
                last_error: None,
            }),
            scene: Mutex::new(cfg.scene.clone()),
            summary: Mutex::new(None),
            live,
            link,
        });
        let (tx, rx) = mpsc::channel();
        let mut run = Run {
            shared: shared.clone(),
            pipeline,
            source,
            emitter,
            store,
            scene_path: cfg.scene_path,
            max_speed: cfg.max_speed,
            rx,
        };
        let thread = thread::Builder::new()
            .name(format!("worker-{}", shared.camera_id))
            .spawn(move || run.main())
            .expect("spawn worker thread");
        Ok(Self { shared, commands: tx, thread })
    }

    pub fn shared(&self) -> &Arc<WorkerShared> {
        &self.shared
    }

    pub fn reference(&self) -> WorkerRef {
        WorkerRef { shared: self.shared.clone(), commands: self.commands.clone() }
    }

    /// Drops this handle's command sender and waits for the thread. With
    /// no other [`WorkerRef`] alive the thread exits once the stream ends.
    pub fn join(self) -> (PipelineHandle, Option<RunSummary>) {
        drop(self.commands);
        let _ = self.thread.join();
        (self.shared.handle(), self.shared.summary())
    }
}

struct Run {
    shared: Arc<WorkerShared>,
    pipeline: Pipeline,
    source: PacketSource,
    emitter: Option<PresenceEmitter>,
    store: SharedStore,
    scene_path: Option<PathBuf>,
    max_speed: bool,
    rx: mpsc::Receiver<Command>,
}

/// How the stream ended.
enum End {
    Finished,
    Stopped,
    Failed(String),
}

impl Run {
    fn main(&mut self) {
        self.shared.update(|h| h.status = WorkerStatus::Running);
        let end = self.stream();
        self.shared.update(|h| h.status = WorkerStatus::Draining);
        let (trajs, summary) = self.pipeline.finish();
        let stored = {
            let mut store = self.store.lock().expect("store lock");
            trajs
                .into_iter()
                .try_for_each(|t| store.record_trajectory(t))
                .and_then(|_| store.flush())
        };
        *self.shared.summary.lock().expect("summary lock") = Some(summary.clone());
        let (status, err) = match (end, stored) {
            (End::Failed(e), _) => (WorkerStatus::Failed, Some(e)),
            (_, Err(e)) => (WorkerStatus::Failed, Some(e.to_string())),
            (End::Finished | End::Stopped, Ok(())) => (WorkerStatus::Stopped, None),
        };
        if let Some(e) = &err {
            warn!(camera = %self.shared.camera_id, error = %e, "worker failed");
        }
        info!(camera = %self.shared.camera_id, packets = summary.packets, tracks = summary.tracks, "stream ended");
        self.shared.update(|h| {
            h.status = status;
            h.rate_pps = 0.0;
            if err.is_some() {
                h.last_error = err;
            }
        });
        self.emitter.take();
        // Edits remain possible after the stream ends, until every sender is gone.
        while let Ok(cmd) = self.rx.recv() {
            let _ = self.command(cmd);
        }
    }

    /// Runs the input to its end. Returns early on `Stop` or a fatal error.
    fn stream(&mut self) -> End {
        let wall0 = Instant::now();
        let mut ts0: Option<i64> = None;
        let mut window = (Instant::now(), 0u64);
        loop {
            loop {
                match self.rx.try_recv() {
                    Ok(cmd) => {
                        if self.command(cmd) {
                            return End::Stopped;
                        }
                    }
                    Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
                }
            }
            let pkt = match self.source.next_packet() {
                Ok(Some(p)) => p,
                Ok(None) => return End::Finished,
                Err(SourceError::Record { line, err }) => {
                    let msg = format!("line {line}: {err}");
                    warn!(camera = %self.shared.camera_id, "skipping malformed record: {msg}");
                    self.shared.update(|h| {
                        h.rejected_records += 1;
                        h.last_error = Some(msg);
                    });
                    continue;
                }
                Err(e) => return End::Failed(e.to_string()),
            };
            if self.source.is_paced() && !self.max_speed {
                let t0 = *ts0.get_or_insert(pkt.ts_ms);
                let due = wall0 + Duration::from_millis((pkt.ts_ms - t0).max(0) as u64);
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
            }
            let live = self.shared.live.receiver_count() > 0;
            let res = match self.pipeline.step_with(&pkt, live) {
                Ok(r) => r,
                Err(e) => {
                    let msg = e.to_string();
                    warn!(camera = %self.shared.camera_id, "rejected packet: {msg}");
                    self.shared.update(|h| {
                        h.rejected_records += 1;
                        h.last_error = Some(msg);
                    });
                    continue;
                }
            };
            if let Err(e) = self.publish(res) {
                return End::Failed(e);
            }
            window.1 += 1;
            let elapsed = window.0.elapsed();
            let frames = self.pipeline.packets();
            let rate = (elapsed >= Duration::from_secs(1)).then(|| window.1 as f64 / elapsed.as_secs_f64());
            if rate.is_some() {
                window = (Instant::now(), 0);
            }
            self.shared.update(|h| {
                h.frames_processed = frames;
                if let Some(r) = rate {
                    h.rate_pps = r;
                }
            });
        }
    }

    fn publish(&mut self, res: StepResult) -> Result<(), String> {
        if let Some(em) = &self.emitter {
            for m in &res.presence {
                em.send(m.clone());
            }
        }
        if !res.events.is_empty() || !res.trajectories.is_empty() {
            let mut store = self.store.lock().expect("store lock");
            for e in res.events {
                store.record_event(e).map_err(|e| e.to_string())?;
            }
            for t in res.trajectories {
                store.record_trajectory(t).map_err(|e| e.to_string())?;
            }
        }
        if let Some(live) = res.live {
            self.shared.live.send_replace(Some(Arc::new(live)));
        }
        Ok(())
    }

    /// Applies one command; returns true for `Stop`.
    fn command(&mut self, cmd: Command) -> bool {
        match cmd {
            Command::Edit { edit, reply } => {
                let _ = reply.send(self.edit(&edit));
                false
            }
            Command::SetRate { approach, veh_per_s, reply } => {
                let r = self
                    .source
                    .set_rate(approach.as_deref(), veh_per_s)
                    .map_err(|e| e.to_string());
                let _ = reply.send(r);
                false
            }
            Command::Stop => true,
        }
    }

    fn edit(&mut self, edit: &SceneEdit) -> Result<SceneConfig, EditError> {
        let ts = self.pipeline.last_ts().unwrap_or_else(now_ms);
        let journal = self.pipeline.apply_edit(edit, ts)?;
        let scene = self.pipeline.scene().clone();
        *self.shared.scene.lock().expect("scene lock") = scene.clone();
        if let Err(e) = self.store.lock().expect("store lock").record_event(journal) {
            warn!(camera = %self.shared.camera_id, "scene edit not journaled: {e}");
        }
        if let Some(path) = &self.scene_path {
            if let Err(e) = persist_scene(path, &scene) {
                warn!(camera = %self.shared.camera_id, "scene not persisted: {e}");
                self.shared.update(|h| h.last_error = Some(format!("scene not persisted: {e}")));
            }
        }
        Ok(scene)
    }
}

/// Writes the scene through a temporary file so readers never see a
/// partial document.
pub fn persist_scene(path: &std::path::Path, scene: &SceneConfig) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, scene.to_json_pretty())?;
    std::fs::rename(tmp, path)
}
