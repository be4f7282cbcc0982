//! Append-only event and trajectory log with epoch-aligned bucket queries.
//!
//! On disk the log is one JSON record per line in `DIR/<camera>/<yyyy-mm-dd>.log`
//! (UTC day of the record timestamp). Opening a directory replays every log
//! file in name order, so the in-memory state is a pure function of the files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TrajectoryRecord;

pub const DEFAULT_FLUSH_INTERVAL: Duration = Duration::from_secs(1);
/// Upper bound on buckets per group returned by one query.
pub const MAX_BUCKETS: i64 = 1_000_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record in {file} line {line}: {reason}")]
    Corrupt { file: String, line: usize, reason: String },
    #[error("event for {camera}/{detector} at {got} is older than {last}")]
    Rejected { camera: String, detector: String, last: i64, got: i64 },
    #[error("unsupported bucket width `{0}` (use 1m, 5m, 15m, 1h or 1d)")]
    UnsupportedBucket(String),
    #[error("query would produce more than {MAX_BUCKETS} buckets")]
    TooManyBuckets,
    #[error("invalid event: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// One vehicle counted by a loop; `value` is the count (normally 1).
    Count,
    /// Loop presence level after an edge (0 or 1).
    PresenceEdge,
    /// Queue length in metres.
    QueueSample,
    /// Fraction of a queue zone covered by vehicles.
    Occupancy,
    /// Ground speed in m/s.
    SpeedSample,
    /// Signal change; 0 green, 1 yellow, 2 red.
    PhaseChange,
    /// Runtime detector edit; 1 for create or replace, 0 for delete.
    SceneEdit,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Count,
        EventKind::PresenceEdge,
        EventKind::QueueSample,
        EventKind::Occupancy,
        EventKind::SpeedSample,
        EventKind::PhaseChange,
        EventKind::SceneEdit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Count => "count",
            EventKind::PresenceEdge => "presence_edge",
            EventKind::QueueSample => "queue_sample",
            EventKind::Occupancy => "occupancy",
            EventKind::SpeedSample => "speed_sample",
            EventKind::PhaseChange => "phase_change",
            EventKind::SceneEdit => "scene_edit",
        }
    }
}

impl FromStr for EventKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| StoreError::Invalid(format!("unknown event kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficEvent {
    pub kind: EventKind,
    pub camera_id: String,
    pub detector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub value: f64,
    pub ts_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Event(TrafficEvent),
    Trajectory(TrajectoryRecord),
}

impl LogRecord {
    fn camera(&self) -> &str {
        match self {
            LogRecord::Event(e) => &e.camera_id,
            LogRecord::Trajectory(t) => &t.camera_id,
        }
    }

    fn ts_ms(&self) -> i64 {
        match self {
            LogRecord::Event(e) => e.ts_ms,
            LogRecord::Trajectory(t) => t.first_ts_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BucketWidth {
    #[serde(rename = "1m")]
    M1,
    #[serde(rename = "5m")]
    M5,
    #[serde(rename = "15m")]
    M15,
    #[serde(rename = "1h")]
    H1,
    #[serde(rename = "1d")]
    D1,
}

impl BucketWidth {
    pub fn millis(self) -> i64 {
        const MIN: i64 = 60_000;
        match self {
            BucketWidth::M1 => MIN,
            BucketWidth::M5 => 5 * MIN,
            BucketWidth::M15 => 15 * MIN,
            BucketWidth::H1 => 60 * MIN,
            BucketWidth::D1 => 24 * 60 * MIN,
        }
    }

    pub fn align(self, ts_ms: i64) -> i64 {
        ts_ms.div_euclid(self.millis()) * self.millis()
    }
}

impl FromStr for BucketWidth {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "1m" => BucketWidth::M1,
            "5m" => BucketWidth::M5,
            "15m" => BucketWidth::M15,
            "1h" => BucketWidth::H1,
            "1d" => BucketWidth::D1,
            _ => return Err(StoreError::UnsupportedBucket(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesFilter {
    #[serde(default)]
    pub camera: Option<String>,
    #[serde(default)]
    pub detector: Option<String>,
    #[serde(default)]
    pub class: Option<String>,
    pub kind: Option<EventKind>,
}

impl SeriesFilter {
    pub fn matches(&self, e: &TrafficEvent) -> bool {
        self.kind.map_or(true, |k| k == e.kind)
            && self.camera.as_ref().map_or(true, |c| *c == e.camera_id)
            && self.detector.as_ref().map_or(true, |d| *d == e.detector)
            && self.class.as_ref().map_or(true, |c| Some(c) == e.class.as_ref())
    }
}

/// Half-open `[from_ms, to_ms)`; an open end takes the extent of the matching data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeRange {
    pub from_ms: Option<i64>,
    pub to_ms: Option<i64>,
}

impl TimeRange {
    pub fn contains(&self, ts: i64) -> bool {
        self.from_ms.map_or(true, |f| ts >= f) && self.to_ms.map_or(true, |t| ts < t)
    }
}

/// One bucket of one `(camera, detector, class, kind)` group.
///
/// For `Count` events `count` is the sum of values and `mean`/`max` are
/// empty; for every other kind `count` is the number of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub bucket_start_ms: i64,
    pub camera: String,
    pub detector: String,
    pub class: String,
    pub kind: EventKind,
    pub count: f64,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

pub const CSV_HEADER: &str = "bucket_start_ms,camera,detector,class,kind,count,mean,max";

/// The single CSV rendering shared by report export and the HTTP API.
pub fn render_csv(rows: &[SeriesRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.bucket_start_ms,
            r.camera,
            r.detector,
            r.class,
            r.kind.as_str(),
            r.count,
            opt(r.mean),
            opt(r.max)
        );
    }
    s
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: u64,
    sum: f64,
    max: f64,
}

/// Groups matching events into aligned buckets. Every group spans the whole
/// range, with empty buckets included. Rows are ordered by group, then time.
pub fn aggregate<'a>(
    events: impl IntoIterator<Item = &'a TrafficEvent>,
    filter: &SeriesFilter,
    range: TimeRange,
    width: BucketWidth,
) -> Result<Vec<SeriesRow>, StoreError> {
    if let (Some(f), Some(t)) = (range.from_ms, range.to_ms) {
        if f >= t {
            return Ok(Vec::new());
        }
    }
    type Key = (String, String, String, EventKind);
    let mut groups: BTreeMap<Key, BTreeMap<i64, Acc>> = BTreeMap::new();
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for e in events {
        if !filter.matches(e) || !range.contains(e.ts_ms) {
            continue;
        }
        lo = lo.min(e.ts_ms);
        hi = hi.max(e.ts_ms);
        let key = (
            e.camera_id.clone(),
            e.detector.clone(),
            e.class.clone().unwrap_or_default(),
            e.kind,
        );
        let acc = groups.entry(key).or_default().entry(width.align(e.ts_ms)).or_default();
        acc.max = if acc.n == 0 { e.value } else { acc.max.max(e.value) };
        acc.n += 1;
        acc.sum += e.value;
    }
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let w = width.millis();
    let first = width.align(range.from_ms.unwrap_or(lo));
    // Last bucket holds the last instant of the range.
    let last = width.align(range.to_ms.map_or(hi, |t| t - 1));
    if (last - first) / w + 1 > MAX_BUCKETS {
        return Err(StoreError::TooManyBuckets);
    }
    let mut rows = Vec::new();
    for ((camera, detector, class, kind), buckets) in groups {
        let mut start = first;
        while start <= last {
            let acc = buckets.get(&start).copied().unwrap_or_default();
            let (count, mean, max) = if kind == EventKind::Count {
                (acc.sum, None, None)
            } else if acc.n == 0 {
                (0.0, None, None)
            } else {
                (acc.n as f64, Some(acc.sum / acc.n as f64), Some(acc.max))
            };
            rows.push(SeriesRow {
                bucket_start_ms: start,
                camera: camera.clone(),
                detector: detector.clone(),
                class: class.clone(),
                kind,
                count,
                mean,
                max,
            });
            start += w;
        }
    }
    Ok(rows)
}

fn day_of(ts_ms: i64) -> String {
    match chrono::DateTime::from_timestamp_millis(ts_ms) {
        Some(t) => t.format("%Y-%m-%d").to_string(),
        None => "out-of-range".to_string(),
    }
}

fn valid_camera_name(c: &str) -> bool {
    !c.is_empty() && !c.starts_with('.') && !c.contains(['/', '\\'])
}

#[derive(Debug)]
pub struct StatsStore {
    dir: Option<PathBuf>,
    events: Vec<TrafficEvent>,
    trajectories: Vec<TrajectoryRecord>,
    last_ts: BTreeMap<(String, String), i64>,
    writers: BTreeMap<(String, String), BufWriter<File>>,
    flush_interval: Duration,
    last_flush: Instant,
}

impl StatsStore {
    /// A store that keeps everything in memory only.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            events: Vec::new(),
            trajectories: Vec::new(),
            last_ts: BTreeMap::new(),
            writers: BTreeMap::new(),
            flush_interval: DEFAULT_FLUSH_INTERVAL,
            last_flush: Instant::now(),
        }
    }

    /// Opens (creating if needed) a log directory and rebuilds the index.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = Self::in_memory();
        let mut cameras: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        cameras.sort();
        for cam in cameras {
            let mut logs: Vec<PathBuf> = fs::read_dir(&cam)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "log"))
                .collect();
            logs.sort();
            for log in logs {
                let reader = BufReader::new(File::open(&log)?);
                for (i, line) in reader.lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let corrupt = |reason: String| StoreError::Corrupt {
                        file: log.display().to_string(),
                        line: i + 1,
                        reason,
                    };
                    let rec: LogRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                    store.apply(rec).map_err(|e| corrupt(e.to_string()))?;
                }
            }
        }
        store.dir = Some(dir);
        Ok(store)
    }

    pub fn set_flush_interval(&mut self, d: Duration) {
        self.flush_interval = d;
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn apply(&mut self, rec: LogRecord) -> Result<(), StoreError> {
        match rec {
            LogRecord::Event(e) => {
                if !e.value.is_finite() {
                    return Err(StoreError::Invalid("non-finite value".into()));
                }
                let key = (e.camera_id.clone(), e.detector.clone());
                if let Some(&last) = self.last_ts.get(&key) {
                    if e.ts_ms < last {
                        return Err(StoreError::Rejected {
                            camera: key.0,
                            detector: key.1,
                            last,
                            got: e.ts_ms,
                        });
                    }
                }
                self.last_ts.insert(key, e.ts_ms);
                self.events.push(e);
            }
            LogRecord::Trajectory(t) => {
                if t.path.is_empty() || t.path.windows(2).any(|w| w[1].frame <= w[0].frame) {
                    return Err(StoreError::Invalid(format!("trajectory {} path is empty or unordered", t.track_id)));
                }
                self.trajectories.push(t);
            }
        }
        Ok(())
    }

    /// Appends a record: it is queryable immediately and written to disk at
    /// the next flush (at most one flush interval later).
    pub fn record(&mut self, rec: LogRecord) -> Result<(), StoreError> {
        if !valid_camera_name(rec.camera()) {
            return Err(StoreError::Invalid(format!("camera id {:?}", rec.camera())));
        }
        let line = serde_json::to_string(&rec).map_err(|e| StoreError::Invalid(e.to_string()))?;
        let partition = (rec.camera().to_string(), day_of(rec.ts_ms()));
        self.apply(rec)?;
        if let Some(dir) = &self.dir {
            if !self.writers.contains_key(&partition) {
                let cam_dir = dir.join(&partition.0);
                fs::create_dir_all(&cam_dir)?;
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(cam_dir.join(format!("{}.log", partition.1)))?;
                self.writers.insert(partition.clone(), BufWriter::new(f));
            }
            let w = self.writers.get_mut(&partition).expect("writer inserted above");
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
            if self.last_flush.elapsed() >= self.flush_interval {
                self.flush()?;
            }
        }
        Ok(())
    }

    pub fn record_event(&mut self, e: TrafficEvent) -> Result<(), StoreError> {
        self.record(LogRecord::Event(e))
    }

    pub fn record_trajectory(&mut self, t: TrajectoryRecord) -> Result<(), StoreError> {
        self.record(LogRecord::Trajectory(t))
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        for w in self.writers.values_mut() {
            w.flush()?;
        }
        self.last_flush = Instant::now();
        Ok(())
    }

    pub fn events(&self) -> &[TrafficEvent] {
        &self.events
    }

    pub fn trajectories(&self) -> &[TrajectoryRecord] {
        &self.trajectories
    }

    pub fn cameras(&self) -> BTreeSet<&str> {
        self.events
            .iter()
            .map(|e| e.camera_id.as_str())
            .chain(self.trajectories.iter().map(|t| t.camera_id.as_str()))
            .collect()
    }

    pub fn query_series(
        &self,
        filter: &SeriesFilter,
        range: TimeRange,
        width: BucketWidth,
    ) -> Result<Vec<SeriesRow>, StoreError> {
        aggregate(&self.events, filter, range, width)
    }

    pub fn query_trajectories(&self, camera: Option<&str>, range: TimeRange) -> Vec<&TrajectoryRecord> {
        self.trajectories
            .iter()
            .filter(|t| camera.map_or(true, |c| c == t.camera_id) && range.contains(t.first_ts_ms))
            .collect()
    }
}

impl Drop for StatsStore {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
