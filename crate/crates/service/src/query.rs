//! Statistics and OD queries shared by the `report` command and the HTTP API,
//! so both render identical bytes for identical filters.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xroads_core::od::{accumulate_od, OdQuery};
use xroads_core::protocol::SceneConfig;
use xroads_core::store::{render_csv, BucketWidth, EventKind, SeriesFilter, StatsStore, StoreError, TimeRange};
use xroads_core::TrajectoryRecord;

pub const DEFAULT_BUCKET: &str = "15m";

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("bad parameter `{0}`: {1}")]
    Param(&'static str, String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(QueryError::Param("format", s.to_string())),
        }
    }
}

/// Raw filter parameters as they arrive from a query string or CLI flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsParams {
    pub kind: Option<String>,
    pub camera: Option<String>,
    pub detector: Option<String>,
    pub class: Option<String>,
    /// Epoch milliseconds, inclusive.
    pub from: Option<String>,
    /// Epoch milliseconds, exclusive.
    pub to: Option<String>,
    pub bucket: Option<String>,
    pub format: Option<String>,
}

fn non_empty(v: &Option<String>) -> Option<&str> {
    v.as_deref().filter(|s| !s.is_empty())
}

fn parse_ms(name: &'static str, v: &Option<String>) -> Result<Option<i64>, QueryError> {
    non_empty(v)
        .map(|s| s.parse::<i64>().map_err(|_| QueryError::Param(name, s.to_string())))
        .transpose()
}

fn parse_range(from: &Option<String>, to: &Option<String>) -> Result<TimeRange, QueryError> {
    let range = TimeRange { from_ms: parse_ms("from", from)?, to_ms: parse_ms("to", to)? };
    if let (Some(f), Some(t)) = (range.from_ms, range.to_ms) {
        if f >= t {
            return Err(QueryError::Param("to", format!("{t} is not after {f}")));
        }
    }
    Ok(range)
}

fn parse_bucket(v: &Option<String>) -> Result<BucketWidth, QueryError> {
    let s = non_empty(v).unwrap_or(DEFAULT_BUCKET);
    s.parse().map_err(|_| QueryError::Param("bucket", s.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsQuery {
    pub filter: SeriesFilter,
    pub range: TimeRange,
    pub bucket: BucketWidth,
    pub format: Format,
}

impl StatsQuery {
    pub fn parse(p: &StatsParams) -> Result<Self, QueryError> {
        let kind = non_empty(&p.kind)
            .map(|k| EventKind::from_str(k).map_err(|_| QueryError::Param("kind", k.to_string())))
            .transpose()?;
        Ok(Self {
            filter: SeriesFilter {
                camera: non_empty(&p.camera).map(str::to_string),
                detector: non_empty(&p.detector).map(str::to_string),
                class: non_empty(&p.class).map(str::to_string),
                kind,
            },
            range: parse_range(&p.from, &p.to)?,
            bucket: parse_bucket(&p.bucket)?,
            format: non_empty(&p.format).map(Format::from_str).transpose()?.unwrap_or_default(),
        })
    }

    pub fn render(&self, store: &StatsStore) -> Result<String, QueryError> {
        let rows = store.query_series(&self.filter, self.range, self.bucket)?;
        Ok(match self.format {
            Format::Csv => render_csv(&rows),
            Format::Json => serde_json::to_string(&rows).expect("rows serialize") + "\n",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OdParams {
    pub camera: Option<String>,
    pub class: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    /// Optional bucket width (`1m` … `1d`); absent means one cell per pair.
    pub bucket: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdCell {
    pub camera: String,
    pub origin: String,
    pub dest: String,
    pub class: String,
    pub bucket_start_ms: i64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdReport {
    pub cells: Vec<OdCell>,
    pub unassigned: u64,
}

impl OdReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("camera,origin,dest,class,bucket_start_ms,count\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.camera, c.origin, c.dest, c.class, c.bucket_start_ms, c.count
            ));
        }
        s
    }
}

/// OD cells over stored trajectories, classified with each camera's current
/// gates and movements. Cameras without a scene are skipped.
pub fn od_report(
    p: &OdParams,
    trajectories: &[TrajectoryRecord],
    scenes: &[SceneConfig],
) -> Result<(OdReport, Format), QueryError> {
    let range = parse_range(&p.from, &p.to)?;
    let bucket_ms = non_empty(&p.bucket).map(|_| parse_bucket(&p.bucket).map(BucketWidth::millis)).transpose()?;
    let format = non_empty(&p.format).map(Format::from_str).transpose()?.unwrap_or(Format::Json);
    let query = OdQuery {
        from_ms: range.from_ms,
        to_ms: range.to_ms,
        class: non_empty(&p.class).map(str::to_string),
        bucket_ms,
    };
    let mut report = OdReport { cells: Vec::new(), unassigned: 0 };
    for scene in scenes {
        if non_empty(&p.camera).is_some_and(|c| c != scene.camera_id) {
            continue;
        }
        let mine: Vec<TrajectoryRecord> = trajectories
            .iter()
            .filter(|t| t.camera_id == scene.camera_id)
            .cloned()
            .collect();
        let od = accumulate_od(&mine, &scene.gates, &scene.movements, &query);
        report.unassigned += od.unassigned;
        report.cells.extend(od.cells.into_iter().map(|(k, count)| OdCell {
            camera: scene.camera_id.clone(),
            origin: k.origin,
            dest: k.dest,
            class: k.class,
            bucket_start_ms: k.bucket_start_ms,
            count,
        }));
    }
    Ok((report, format))
}
