//! Detection matching, precision–recall curves, AP, mAP and accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use xroads_core::{iou, ClassId, ClassSet, Detection};

use crate::EvalError;

/// Detections per image id.
pub type Dataset = BTreeMap<String, Vec<Detection>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApInterpolation {
    #[default]
    AllPoint,
    #[serde(rename = "101-point")]
    Point101,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyDenominator {
    /// TP / number of ground-truth boxes.
    #[default]
    GroundTruth,
    /// TP / (TP + FP + FN).
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub ap_interpolation: ApInterpolation,
    pub accuracy_denominator: AccuracyDenominator,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            ap_interpolation: ApInterpolation::AllPoint,
            accuracy_denominator: AccuracyDenominator::GroundTruth,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.iou_threshold > 0.0 && self.iou_threshold < 1.0 {
            Ok(())
        } else {
            Err(EvalError::Config("iou_threshold must be in (0, 1)".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredMatch {
    pub tp: bool,
    /// Matched ground-truth index when `tp`.
    pub gt: Option<usize>,
    /// Best IoU against an unmatched same-class ground truth at match time.
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatch {
    /// Parallel to the prediction input.
    pub preds: Vec<PredMatch>,
    /// Parallel to the ground-truth input: index of the matching prediction.
    pub gts: Vec<Option<usize>>,
}

/// Predictions in descending score order, ties by input index.
fn score_order(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
}

/// Greedy by score: each prediction takes the unmatched same-class ground
/// truth of highest IoU (lowest index on ties) and is a TP iff that IoU
/// reaches the threshold.
pub fn match_detections(preds: &[Detection], gts: &[Detection], iou_threshold: f64) -> ImageMatch {
    let mut out = ImageMatch {
        preds: vec![PredMatch { tp: false, gt: None, iou: 0.0 }; preds.len()],
        gts: vec![None; gts.len()],
    };
    for p in score_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.cls != preds[p].cls || out.gts[g].is_some() {
                continue;
            }
            let v = iou(&preds[p].bbox, &gt.bbox);
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            out.preds[p].iou = v;
            if v >= iou_threshold {
                out.preds[p].tp = true;
                out.preds[p].gt = Some(g);
                out.gts[g] = Some(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredOutcome {
    pub score: f64,
    pub tp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Score threshold at which this point is reached.
    pub score: f64,
}

/// Precision–recall points and AP for one class.
///
/// Points are taken at every distinct score: all predictions with equal
/// scores enter together, so the result does not depend on their order.
/// AP is `None` when the class has no ground truth.
pub fn average_precision(
    outcomes: &[ScoredOutcome],
    n_gt: usize,
    interp: ApInterpolation,
) -> (Vec<PrPoint>, Option<f64>) {
    if n_gt == 0 {
        return (Vec::new(), None);
    }
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, o) in sorted.iter().enumerate() {
        if o.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let boundary = sorted.get(i + 1).map_or(true, |n| n.score != o.score);
        if boundary {
            curve.push(PrPoint {
                recall: tp as f64 / n_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
                score: o.score,
            });
        }
    }
    // Precision envelope from the right.
    let mut env = vec![0.0; curve.len()];
    let mut m: f64 = 0.0;
    for i in (0..curve.len()).rev() {
        m = m.max(curve[i].precision);
        env[i] = m;
    }
    let ap = match interp {
        ApInterpolation::AllPoint => {
            let mut prev = 0.0;
            let mut sum = 0.0;
            for (p, e) in curve.iter().zip(&env) {
                sum += (p.recall - prev) * e;
                prev = p.recall;
            }
            sum
        }
        ApInterpolation::Point101 => {
            let mut sum = 0.0;
            let mut j = 0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                while j < curve.len() && curve[j].recall < r - 1e-12 {
                    j += 1;
                }
                sum += env.get(j).copied().unwrap_or(0.0);
            }
            sum / 101.0
        }
    };
    (curve, Some(ap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ap: Option<f64>,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: EvalConfig,
    pub classes: Vec<ClassReport>,
    /// Unweighted mean over classes with ground truth.
    pub map: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub accuracy_ground_truth: Option<f64>,
    pub accuracy_union: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricReport {
    /// Accuracy under the configured denominator.
    pub fn accuracy(&self) -> Option<f64> {
        match self.config.accuracy_denominator {
            AccuracyDenominator::GroundTruth => self.accuracy_ground_truth,
            AccuracyDenominator::Union => self.accuracy_union,
        }
    }

    pub fn class_ap(&self, class: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.class == class).and_then(|c| c.ap)
    }

    /// Per-class rows followed by an `ALL` summary row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,n_gt,n_pred,tp,fp,fn,ap\n");
        for c in &self.classes {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", c.class, c.n_gt, c.n_pred, c.tp, c.fp, c.fn_, opt(c.ap));
        }
        let n_gt: usize = self.classes.iter().map(|c| c.n_gt).sum();
        let n_pred: usize = self.classes.iter().map(|c| c.n_pred).sum();
        let _ = writeln!(s, "ALL,{n_gt},{n_pred},{},{},{},{}", self.tp, self.fp, self.fn_, opt(self.map));
        let _ = writeln!(s, "accuracy_ground_truth,{}", opt(self.accuracy_ground_truth));
        let _ = writeln!(s, "accuracy_union,{}", opt(self.accuracy_union));
        s
    }

    /// `class,recall,precision,score` for every curve point.
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("class,recall,precision,score\n");
        for c in &self.classes {
            for p in &c.curve {
                let _ = writeln!(s, "{},{},{},{}", c.class, p.recall, p.precision, p.score);
            }
        }
        s
    }
}

fn check_classes(data: &Dataset, classes: &ClassSet, what: &str) -> Result<(), EvalError> {
    for (img, dets) in data {
        if let Some(d) = dets.iter().find(|d| d.cls.index() >= classes.len()) {
            return Err(EvalError::ClassMismatch(format!("{what} {img}: class {} outside the class set", d.cls)));
        }
    }
    Ok(())
}

/// Matches every image, then aggregates per class. Images present on only
/// one side count as having no boxes on the other.
pub fn evaluate_dataset(
    preds: &Dataset,
    gts: &Dataset,
    classes: &ClassSet,
    cfg: &EvalConfig,
) -> Result<MetricReport, EvalError> {
    cfg.validate()?;
    check_classes(preds, classes, "prediction")?;
    check_classes(gts, classes, "ground truth")?;
    let n = classes.len();
    let mut outcomes: Vec<Vec<ScoredOutcome>> = vec![Vec::new(); n];
    let mut n_gt = vec![0usize; n];
    let mut fn_ = vec![0usize; n];
    let empty = Vec::new();
    let images: BTreeSet<&String> = preds.keys().chain(gts.keys()).collect();
    for img in images {
        let p = preds.get(img).unwrap_or(&empty);
        let g = gts.get(img).unwrap_or(&empty);
        let m = match_detections(p, g, cfg.iou_threshold);
        for (d, r) in p.iter().zip(&m.preds) {
            outcomes[d.cls.index()].push(ScoredOutcome { score: d.score, tp: r.tp });
        }
        for (d, r) in g.iter().zip(&m.gts) {
            n_gt[d.cls.index()] += 1;
            if r.is_none() {
                fn_[d.cls.index()] += 1;
            }
        }
    }
    let mut reports = Vec::with_capacity(n);
    for id in classes.ids() {
        let k = id.index();
        let (curve, ap) = average_precision(&outcomes[k], n_gt[k], cfg.ap_interpolation);
        let tp = outcomes[k].iter().filter(|o| o.tp).count();
        reports.push(ClassReport {
            class: classes.name(ClassId(id.0)).unwrap_or_default().to_string(),
            n_gt: n_gt[k],
            n_pred: outcomes[k].len(),
            tp,
            fp: outcomes[k].len() - tp,
            fn_: fn_[k],
            ap,
            curve,
        });
    }
    let aps: Vec<f64> = reports.iter().filter_map(|r| r.ap).collect();
    let map = (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64);
    let tp: usize = reports.iter().map(|r| r.tp).sum();
    let fp: usize = reports.iter().map(|r| r.fp).sum();
    let fns: usize = reports.iter().map(|r| r.fn_).sum();
    let total_gt: usize = n_gt.iter().sum();
    Ok(MetricReport {
        config: *cfg,
        classes: reports,
        map,
        tp,
        fp,
        fn_: fns,
        accuracy_ground_truth: (total_gt > 0).then(|| tp as f64 / total_gt as f64),
        accuracy_union: (tp + fp + fns > 0).then(|| tp as f64 / (tp + fp + fns) as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use xroads_core::BBox;

    fn det(cls: u16, score: f64, x: f64) -> Detection {
        Detection { cls: ClassId(cls), score, bbox: BBox::new(x, 0.0, 10.0, 10.0).unwrap() }
    }

    #[test]
    fn single_true_positive() {
        // Shift 2 of width 10: IoU = 80 / 120.
        let m = match_detections(&[det(0, 0.9, 2.0)], &[det(0, 1.0, 0.0)], 0.5);
        assert!(m.preds[0].tp);
        assert_eq!(m.gts, vec![Some(0)]);
    }

    #[test]
    fn wrong_class_is_fp_and_fn() {
        let m = match_detections(&[det(1, 0.9, 0.0)], &[det(0, 1.0, 0.0)], 0.5);
        assert!(!m.preds[0].tp);
        assert_eq!(m.gts, vec![None]);
    }

    #[test]
    fn higher_score_wins_the_ground_truth() {
        // Offsets chosen for IoU 0.6 (x=2.5) and 0.7 (x=1.764...).
        let iou_for = |x: f64| (10.0 - x) / (10.0 + x);
        let x06 = 10.0 * (1.0 - 0.6) / 1.6;
        let x07 = 10.0 * (1.0 - 0.7) / 1.7;
        assert!((iou_for(x06) - 0.6).abs() < 1e-12 && (iou_for(x07) - 0.7).abs() < 1e-12);
        let preds = [det(0, 0.9, x06), det(0, 0.8, x07)];
        let m = match_detections(&preds, &[det(0, 1.0, 0.0)], 0.5);
        assert!(m.preds[0].tp && !m.preds[1].tp);
        let outcomes: Vec<ScoredOutcome> =
            preds.iter().zip(&m.preds).map(|(d, r)| ScoredOutcome { score: d.score, tp: r.tp }).collect();
        let (curve, ap) = average_precision(&outcomes, 1, ApInterpolation::AllPoint);
        let pr: Vec<(f64, f64)> = curve.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pr, vec![(1.0, 1.0), (0.5, 1.0)]);
        assert_eq!(ap, Some(1.0));
    }

    #[test]
    fn degenerate_aps() {
        assert_eq!(average_precision(&[], 1, ApInterpolation::AllPoint).1, Some(0.0));
        assert_eq!(average_precision(&[], 0, ApInterpolation::AllPoint).1, None);
        let perfect = [ScoredOutcome { score: 0.3, tp: true }];
        assert_eq!(average_precision(&perfect, 1, ApInterpolation::AllPoint).1, Some(1.0));
        assert_eq!(average_precision(&perfect, 1, ApInterpolation::Point101).1, Some(1.0));
    }

    #[test]
    fn map_of_one_and_zero_is_half() {
        let classes = ClassSet::new(["A", "B"]).unwrap();
        let gts: Dataset = [("i".to_string(), vec![det(0, 1.0, 0.0), det(1, 1.0, 50.0)])].into();
        let preds: Dataset = [("i".to_string(), vec![det(0, 0.9, 0.0)])].into();
        let r = evaluate_dataset(&preds, &gts, &classes, &EvalConfig::default()).unwrap();
        assert_eq!(r.class_ap("A"), Some(1.0));
        assert_eq!(r.class_ap("B"), Some(0.0));
        assert_eq!(r.map, Some(0.5));
        assert_eq!(r.accuracy_ground_truth, Some(0.5));
        assert_eq!(r.accuracy_union, Some(0.5));
    }

    #[test]
    fn all_correct_accuracy_is_one() {
        let classes = ClassSet::six();
        let gts: Dataset = [("a".to_string(), vec![det(0, 1.0, 0.0), det(2, 1.0, 30.0)])].into();
        let r = evaluate_dataset(&gts, &gts, &classes, &EvalConfig::default()).unwrap();
        assert_eq!(r.accuracy_ground_truth, Some(1.0));
        assert_eq!(r.accuracy_union, Some(1.0));
        assert_eq!(r.map, Some(1.0));
    }

    #[test]
    fn class_outside_set_is_rejected() {
        let classes = ClassSet::new(["A"]).unwrap();
        let gts: Dataset = [("a".to_string(), vec![det(3, 1.0, 0.0)])].into();
        assert!(matches!(
            evaluate_dataset(&Dataset::new(), &gts, &classes, &EvalConfig::default()),
            Err(EvalError::ClassMismatch(_))
        ));
        let bad = EvalConfig { iou_threshold: 1.0, ..EvalConfig::default() };
        assert!(bad.validate().is_err());
    }
}
