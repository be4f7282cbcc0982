//! Newline-delimited prediction and ground-truth files.
//!
//! Each line is a detection record keyed by `image_id`:
//!
//! ```text
//! {"image_id":"000123","detections":[{"cls":"Car","score":0.9,"bbox":[10,20,30,40]}]}
//! ```
//!
//! Frame records without `image_id` are keyed as `camera_id/frame`, so
//! simulator output can be evaluated directly.

use std::path::Path;

use serde_json::{json, Value};
use xroads_core::protocol::{encode_detections, parse_detections};
use xroads_core::ClassSet;

use crate::detection::Dataset;
use crate::EvalError;

fn image_key(obj: &serde_json::Map<String, Value>) -> Option<String> {
    if let Some(id) = obj.get("image_id") {
        return match id {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        };
    }
    let cam = obj.get("camera_id")?.as_str()?;
    let frame = obj.get("frame")?.as_u64()?;
    Some(format!("{cam}/{frame}"))
}

/// Parses a whole file's text; repeated image ids are concatenated.
pub fn parse_dataset(text: &str, classes: &ClassSet) -> Result<Dataset, EvalError> {
    let mut out = Dataset::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| EvalError::Parse { line: line_no, reason };
        let v: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| err("record is not an object".into()))?;
        let key = image_key(obj).ok_or_else(|| err("missing image_id".into()))?;
        let dets_v = obj.get("detections").ok_or_else(|| err("missing detections".into()))?;
        let dets = parse_detections(dets_v, classes).map_err(|e| match e {
            xroads_core::protocol::PacketError::UnknownClass(c) => {
                EvalError::ClassMismatch(format!("line {line_no}: unknown class {c}"))
            }
            other => err(other.to_string()),
        })?;
        out.entry(key).or_default().extend(dets);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, classes: &ClassSet) -> Result<Dataset, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(e.to_string()))?;
    parse_dataset(&text, classes)
}

/// One line per image, in image-id order.
pub fn render_dataset(data: &Dataset, classes: &ClassSet) -> String {
    let mut s = String::new();
    for (id, dets) in data {
        let rec = json!({ "image_id": id, "detections": encode_detections(dets, classes) });
        s.push_str(&rec.to_string());
        s.push('\n');
    }
    s
}
