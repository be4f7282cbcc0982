//! Evaluation toolkit: detection metrics (matching, precision–recall, AP,
//! mAP, accuracy), tracking metrics, class-imbalance augmentation planning
//! and stratified dataset splitting.

pub mod augment;
pub mod detection;
pub mod manifest;
pub mod records;
pub mod reference;
pub mod split;
pub mod tracking;

use thiserror::Error;

pub use augment::{plan_augmentation, AugmentConfig, AugmentationPlan, Duplicate, UnmetTarget, TRANSFORMS};
pub use detection::{
    average_precision, evaluate_dataset, match_detections, AccuracyDenominator, ApInterpolation, ClassReport,
    Dataset, EvalConfig, ImageMatch, MetricReport, PrPoint, PredMatch, ScoredOutcome,
};
pub use manifest::{LabelManifest, ManifestImage};
pub use split::{split_dataset, Split, SplitAssignment};
pub use tracking::{tracking_metrics, TrackBox, TrackingMetrics};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("class mismatch: {0}")]
    ClassMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o: {0}")]
    Io(String),
}
