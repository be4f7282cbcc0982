//! Newline-delimited JSON detection records.
//!
//! ```text
//! {"camera_id":"cam1","frame":0,"ts_ms":0,"detections":[{"cls":"Car","score":0.9,"bbox":[10,20,30,40]}]}
//! ```

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{ClassSet, Detection, FramePacket};
use crate::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("not a JSON object: {0}")]
    Syntax(String),
    /// Names the first missing or ill-typed field.
    #[error("schema error at `{0}`")]
    Schema(String),
    #[error("value out of bounds at `{0}`")]
    Bounds(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, path: &str) -> Result<&'a Value, PacketError> {
    obj.get(name).ok_or_else(|| PacketError::Schema(path.to_string()))
}

fn parse_detection(v: &Value, i: usize, classes: &ClassSet) -> Result<Detection, PacketError> {
    let at = |f: &str| format!("detections[{i}].{f}");
    let obj = v
        .as_object()
        .ok_or_else(|| PacketError::Schema(format!("detections[{i}]")))?;
    let cls_name = field(obj, "cls", &at("cls"))?
        .as_str()
        .ok_or_else(|| PacketError::Schema(at("cls")))?;
    let score = field(obj, "score", &at("score"))?
        .as_f64()
        .ok_or_else(|| PacketError::Schema(at("score")))?;
    let raw = field(obj, "bbox", &at("bbox"))?
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| PacketError::Schema(at("bbox")))?;
    let mut b = [0.0; 4];
    for (k, x) in raw.iter().enumerate() {
        b[k] = x.as_f64().ok_or_else(|| PacketError::Schema(at("bbox")))?;
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(PacketError::Bounds(at("score")));
    }
    let bbox = BBox::new(b[0], b[1], b[2], b[3]).map_err(|_| PacketError::Bounds(at("bbox")))?;
    let cls = classes
        .id(cls_name)
        .ok_or_else(|| PacketError::UnknownClass(cls_name.to_string()))?;
    Ok(Detection { cls, score, bbox })
}

/// Parses one record. Unknown fields are ignored; a `format_version`, when
/// present, must be 1.
pub fn parse_frame_packet(line: &str, classes: &ClassSet) -> Result<FramePacket, PacketError> {
    let v: Value = serde_json::from_str(line).map_err(|e| PacketError::Syntax(e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| PacketError::Syntax("top level is not an object".into()))?;
    if let Some(fv) = obj.get("format_version") {
        if fv.as_u64() != Some(super::FORMAT_VERSION) {
            return Err(PacketError::Schema("format_version".into()));
        }
    }
    let camera_id = field(obj, "camera_id", "camera_id")?
        .as_str()
        .ok_or_else(|| PacketError::Schema("camera_id".into()))?
        .to_string();
    let frame = field(obj, "frame", "frame")?
        .as_u64()
        .ok_or_else(|| PacketError::Schema("frame".into()))?;
    let ts_ms = field(obj, "ts_ms", "ts_ms")?
        .as_i64()
        .ok_or_else(|| PacketError::Schema("ts_ms".into()))?;
    let detections = parse_detections(field(obj, "detections", "detections")?, classes)?;
    Ok(FramePacket {
        camera_id,
        frame,
        ts_ms,
        detections,
    })
}

/// Parses the `detections` array of a record.
pub fn parse_detections(v: &Value, classes: &ClassSet) -> Result<Vec<Detection>, PacketError> {
    v.as_array()
        .ok_or_else(|| PacketError::Schema("detections".into()))?
        .iter()
        .enumerate()
        .map(|(i, d)| parse_detection(d, i, classes))
        .collect()
}

/// Encodes a detection list in record form, as a JSON value.
pub fn encode_detections(dets: &[Detection], classes: &ClassSet) -> Value {
    serde_json::to_value(wire_detections(dets, classes)).expect("detection serialization is infallible")
}

fn wire_detections<'a>(dets: &[Detection], classes: &'a ClassSet) -> Vec<WireDetection<'a>> {
    dets.iter()
        .map(|d| WireDetection {
            cls: classes.name(d.cls).expect("class id outside the class set"),
            score: d.score,
            bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
        })
        .collect()
}

#[derive(Serialize)]
struct WireDetection<'a> {
    cls: &'a str,
    score: f64,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct WirePacket<'a> {
    camera_id: &'a str,
    frame: u64,
    ts_ms: i64,
    detections: Vec<WireDetection<'a>>,
}

/// Canonical single-line form (no trailing newline): fixed key order,
/// shortest round-tripping number formatting.
///
/// # Panics
/// If a detection's class id is not part of `classes`.
pub fn encode_frame_packet(p: &FramePacket, classes: &ClassSet) -> String {
    let wire = WirePacket {
        camera_id: &p.camera_id,
        frame: p.frame,
        ts_ms: p.ts_ms,
        detections: wire_detections(&p.detections, classes),
    };
    serde_json::to_string(&wire).expect("packet serialization is infallible")
}
