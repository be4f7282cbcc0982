//! Detector noise: misses, box jitter, false positives, class confusion and
//! confidence scores.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use xroads_core::model::{ClassId, Detection, FramePacket};
use xroads_core::BBox;

use crate::{stream_rng, SimError, STREAM_NOISE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaScore {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    #[serde(default)]
    pub p_miss: f64,
    /// Pixels, applied independently to x, y, w and h.
    #[serde(default)]
    pub jitter_sigma: f64,
    /// Expected false positives per frame.
    #[serde(default)]
    pub fp_rate: f64,
    /// Row `i` is the distribution of the reported class for true class `i`;
    /// `None` keeps classes unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<f64>>>,
    /// Confidence model for surviving and false boxes; `None` keeps scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<BetaScore>,
}

/// False-positive box sides are drawn uniformly from this range (pixels).
pub const FP_SIZE_RANGE: (f64, f64) = (12.0, 96.0);

impl NoiseParams {
    pub fn validate(&self, n_classes: usize) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_miss) {
            return bad("p_miss must be in [0, 1]");
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return bad("jitter_sigma must be >= 0");
        }
        if !(self.fp_rate.is_finite() && self.fp_rate >= 0.0) {
            return bad("fp_rate must be >= 0");
        }
        if let Some(rows) = &self.confusion {
            if rows.len() != n_classes || rows.iter().any(|r| r.len() != n_classes) {
                return bad("confusion matrix must be square over the class set");
            }
            for r in rows {
                if r.iter().any(|p| !(0.0..=1.0).contains(p)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("confusion rows must be probabilities summing to 1");
                }
            }
        }
        if let Some(b) = self.score {
            if !(b.alpha > 0.0 && b.beta > 0.0) {
                return bad("score beta parameters must be positive");
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.p_miss == 0.0
            && self.jitter_sigma == 0.0
            && self.fp_rate == 0.0
            && self.score.is_none()
            && self.confusion.as_ref().map_or(true, |rows| {
                rows.iter()
                    .enumerate()
                    .all(|(i, r)| r.iter().enumerate().all(|(j, p)| *p == if i == j { 1.0 } else { 0.0 }))
            })
    }
}

/// Frame-by-frame noise source with its own random stream.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    params: NoiseParams,
    n_classes: usize,
    image: (f64, f64),
    rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    fp: Option<Poisson<f64>>,
    score: Option<Beta<f64>>,
}

impl NoiseModel {
    pub fn new(params: NoiseParams, n_classes: usize, image_size: [u32; 2], seed: u64) -> Result<Self, SimError> {
        params.validate(n_classes)?;
        let cfg = |e: String| SimError::Config(e);
        let jitter = (params.jitter_sigma > 0.0)
            .then(|| Normal::new(0.0, params.jitter_sigma).map_err(|e| cfg(e.to_string())))
            .transpose()?;
        let fp = (params.fp_rate > 0.0)
            .then(|| Poisson::new(params.fp_rate).map_err(|e| cfg(e.to_string())))
            .transpose()?;
        let score = params
            .score
            .map(|b| Beta::new(b.alpha, b.beta).map_err(|e| cfg(e.to_string())))
            .transpose()?;
        Ok(Self {
            params,
            n_classes,
            image: (image_size[0] as f64, image_size[1] as f64),
            rng: stream_rng(seed, STREAM_NOISE),
            jitter,
            fp,
            score,
        })
    }

    fn relabel(&mut self, cls: ClassId) -> ClassId {
        let Some(rows) = &self.params.confusion else {
            return cls;
        };
        let row = &rows[cls.index()];
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return ClassId(j as u16);
            }
        }
        // Rounding left `u` past the last bucket: take the last non-zero entry.
        let last = row.iter().rposition(|p| *p > 0.0).unwrap_or(cls.index());
        ClassId(last as u16)
    }

    fn draw_score(&mut self, current: f64) -> f64 {
        match self.score {
            Some(b) => b.sample(&mut self.rng),
            None => current,
        }
    }

    pub fn apply(&mut self, packet: &FramePacket) -> FramePacket {
        let mut out = Vec::with_capacity(packet.detections.len() + 1);
        for d in &packet.detections {
            if self.params.p_miss > 0.0 && self.rng.random::<f64>() < self.params.p_miss {
                continue;
            }
            let mut b = d.bbox;
            if let Some(n) = self.jitter {
                let (dx, dy, dw, dh) = (
                    n.sample(&mut self.rng),
                    n.sample(&mut self.rng),
                    n.sample(&mut self.rng),
                    n.sample(&mut self.rng),
                );
                b = BBox::new(b.x + dx, b.y + dy, (b.w + dw).max(1.0), (b.h + dh).max(1.0))
                    .expect("jittered box has positive size");
            }
            let cls = self.relabel(d.cls);
            let score = self.draw_score(d.score);
            out.push(Detection { cls, score, bbox: b });
        }
        if let Some(p) = self.fp {
            let k = p.sample(&mut self.rng) as usize;
            for _ in 0..k {
                let (lo, hi) = FP_SIZE_RANGE;
                let w = self.rng.random_range(lo..hi);
                let h = self.rng.random_range(lo..hi);
                let cx = self.rng.random_range(0.0..self.image.0);
                let cy = self.rng.random_range(0.0..self.image.1);
                let cls = ClassId(self.rng.random_range(0..self.n_classes) as u16);
                let score = self.draw_score(0.5);
                let Some(bbox) = BBox::from_center(cx, cy, w, h)
                    .ok()
                    .and_then(|b| b.clip_to(self.image.0, self.image.1))
                else {
                    continue;
                };
                out.push(Detection { cls, score, bbox });
            }
        }
        FramePacket {
            camera_id: packet.camera_id.clone(),
            frame: packet.frame,
            ts_ms: packet.ts_ms,
            detections: out,
        }
    }
}

/// Applies noise to a whole stream; deterministic for a given seed.
pub fn apply_noise(
    packets: &[FramePacket],
    params: &NoiseParams,
    n_classes: usize,
    image_size: [u32; 2],
    seed: u64,
) -> Result<Vec<FramePacket>, SimError> {
    let mut model = NoiseModel::new(params.clone(), n_classes, image_size, seed)?;
    Ok(packets.iter().map(|p| model.apply(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(frames: u64, per_frame: usize) -> Vec<FramePacket> {
        (0..frames)
            .map(|f| FramePacket {
                camera_id: "c".into(),
                frame: f,
                ts_ms: f as i64 * 50,
                detections: (0..per_frame)
                    .map(|i| Detection {
                        cls: ClassId((i % 3) as u16),
                        score: 1.0,
                        bbox: BBox::new(10.0 * i as f64, 5.0, 20.0, 10.0).unwrap(),
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn identity_noise_is_identity() {
        let s = stream(20, 5);
        let out = apply_noise(&s, &NoiseParams::default(), 6, [640, 480], 1).unwrap();
        assert_eq!(out, s);
        let identity = NoiseParams {
            confusion: Some((0..6).map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()),
            ..NoiseParams::default()
        };
        assert!(identity.is_identity());
        assert_eq!(apply_noise(&s, &identity, 6, [640, 480], 1).unwrap(), s);
    }

    #[test]
    fn total_miss_empties_frames() {
        let np = NoiseParams { p_miss: 1.0, ..NoiseParams::default() };
        let out = apply_noise(&stream(10, 4), &np, 6, [640, 480], 3).unwrap();
        assert!(out.iter().all(|p| p.detections.is_empty()));
    }

    #[test]
    fn confusion_moves_labels() {
        let mut rows: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        rows[0] = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let np = NoiseParams { confusion: Some(rows), ..NoiseParams::default() };
        let out = apply_noise(&stream(1, 3), &np, 6, [640, 480], 3).unwrap();
        let cls: Vec<u16> = out[0].detections.iter().map(|d| d.cls.0).collect();
        assert_eq!(cls, vec![1, 1, 2]);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(NoiseParams { p_miss: 1.5, ..Default::default() }.validate(6).is_err());
        let rows = vec![vec![0.5; 6]; 6];
        assert!(NoiseParams { confusion: Some(rows), ..Default::default() }.validate(6).is_err());
    }
}
