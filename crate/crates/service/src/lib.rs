//! Pipeline orchestration, the HTTP/WebSocket API and the `xroads` CLI.

pub mod api;
pub mod cli;
pub mod emitter;
pub mod pipeline;
pub mod query;
pub mod source;
pub mod worker;

pub use api::{router, AppState};
pub use pipeline::{
    run_packets, DetectorKind, EditError, LiveFrameState, LiveLoop, LiveSignal, LiveTrack, LiveZone, OdPair, Pipeline,
    PipelineError, RunSummary, SceneEdit, StepResult,
};
pub use query::{StatsParams, StatsQuery};
pub use source::{InputSpec, PacketSource, SourceError};
pub use worker::{Command, PipelineHandle, SharedStore, Worker, WorkerConfig, WorkerRef, WorkerStatus};
