//! Per-image label counts for a detection dataset.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub id: String,
    /// Labels per class, parallel to [`LabelManifest::classes`].
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelManifest {
    pub classes: Vec<String>,
    pub images: Vec<ManifestImage>,
}

impl LabelManifest {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.classes.is_empty() {
            return bad("manifest has no classes".into());
        }
        if self.images.is_empty() {
            return bad("manifest has no images".into());
        }
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.id.as_str()) {
                return bad(format!("duplicate image id {}", img.id));
            }
            if img.counts.len() != self.classes.len() {
                return bad(format!("image {}: expected {} counts", img.id, self.classes.len()));
            }
            if img.counts.iter().all(|c| *c == 0) {
                return bad(format!("image {} has no labels", img.id));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let m: Self = serde_json::from_str(text).map_err(|e| EvalError::Parse { line: e.line(), reason: e.to_string() })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serialization is infallible")
    }

    pub fn totals(&self) -> Vec<u64> {
        let mut t = vec![0; self.classes.len()];
        for img in &self.images {
            for (k, c) in img.counts.iter().enumerate() {
                t[k] += c;
            }
        }
        t
    }

    /// Class with the most labels in image `i`; lowest index on ties.
    pub fn dominant(&self, i: usize) -> usize {
        dominant_class(&self.images[i].counts)
    }

    /// Single-class images: class `k` gets `images[k]` images over which its
    /// `totals[k]` labels are spread as evenly as possible.
    pub fn single_class(classes: &[&str], totals: &[u64], images: &[u64]) -> Result<Self, EvalError> {
        if classes.len() != totals.len() || classes.len() != images.len() {
            return Err(EvalError::Config("classes, totals and image counts must align".into()));
        }
        let mut out = Vec::new();
        for (k, name) in classes.iter().enumerate() {
            let (t, m) = (totals[k], images[k]);
            if m > t || (t > 0 && m == 0) {
                return Err(EvalError::Config(format!("{name}: {m} images cannot hold {t} labels")));
            }
            let slug: String = name.chars().map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
            for j in 0..m {
                let mut counts = vec![0; classes.len()];
                counts[k] = t / m + u64::from(j < t % m);
                out.push(ManifestImage { id: format!("{slug}-{j:06}"), counts });
            }
        }
        let m = Self { classes: classes.iter().map(|s| s.to_string()).collect(), images: out };
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn dominant_class(counts: &[u64]) -> usize {
    let mut best = 0;
    for (k, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = k;
        }
    }
    best
}
