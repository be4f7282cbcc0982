use std::collections::BTreeMap;
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xroads_core::{iou, BBox, ClassId, ClassSet, Detection};
use xroads_eval::reference::{reference_manifest, AUGMENTED_IMAGES, IMAGES};
use xroads_eval::split::largest_remainder;
use xroads_eval::{
    average_precision, evaluate_dataset, match_detections, plan_augmentation, split_dataset, tracking_metrics,
    ApInterpolation, AugmentConfig, Dataset, EvalConfig, LabelManifest, ManifestImage, ScoredOutcome, Split, TrackBox,
};

/// AP by sweeping every distinct score threshold and counting directly.
fn oracle_ap(outcomes: &[ScoredOutcome], n_gt: usize) -> f64 {
    let mut thresholds: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|t| {
            let kept: Vec<&ScoredOutcome> = outcomes.iter().filter(|o| o.score >= *t).collect();
            let tp = kept.iter().filter(|o| o.tp).count() as f64;
            (tp / n_gt as f64, tp / kept.len() as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for &(r, _) in &pts {
        let env = pts.iter().filter(|(r2, _)| *r2 >= r).map(|(_, p)| *p).fold(0.0, f64::max);
        ap += (r - prev_r) * env;
        prev_r = r;
    }
    ap
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), rng.random_range(5.0..25.0), rng.random_range(5.0..25.0))
        .unwrap()
}

/// Predictions near ground truth plus strays, scores on a coarse grid so ties occur.
fn micro_dataset(rng: &mut ChaCha8Rng, n_classes: u16) -> (Dataset, Dataset) {
    let mut gts = Dataset::new();
    let mut preds = Dataset::new();
    let images = rng.random_range(1..=3);
    let mut budget = 20;
    for i in 0..images {
        let id = format!("img{i}");
        let mut g = Vec::new();
        let mut p = Vec::new();
        for _ in 0..rng.random_range(0..=4).min(budget) {
            budget -= 1;
            let b = random_box(rng);
            let cls = ClassId(rng.random_range(0..n_classes));
            g.push(Detection { cls, score: 1.0, bbox: b });
            if rng.random_bool(0.8) && budget > 0 {
                budget -= 1;
                let j = BBox::new(b.x + rng.random_range(-4.0..4.0), b.y + rng.random_range(-4.0..4.0), b.w, b.h).unwrap();
                p.push(Detection { cls, score: rng.random_range(1..=10) as f64 / 10.0, bbox: j });
            }
        }
        for _ in 0..rng.random_range(0..=2).min(budget) {
            budget -= 1;
            p.push(Detection {
                cls: ClassId(rng.random_range(0..n_classes)),
                score: rng.random_range(1..=10) as f64 / 10.0,
                bbox: random_box(rng),
            });
        }
        gts.insert(id.clone(), g);
        preds.insert(id, p);
    }
    (preds, gts)
}

#[test]
fn ap_matches_threshold_sweep_on_500_micro_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let classes = ClassSet::new(["a", "b", "c"]).unwrap();
    let mut checked = 0;
    for _ in 0..500 {
        let (preds, gts) = micro_dataset(&mut rng, 3);
        let report = evaluate_dataset(&preds, &gts, &classes, &EvalConfig::default()).unwrap();
        for (k, cr) in report.classes.iter().enumerate() {
            let mut outcomes = Vec::new();
            for (img, p) in &preds {
                let m = match_detections(p, &gts[img], 0.5);
                for (d, r) in p.iter().zip(&m.preds) {
                    if d.cls.index() == k {
                        outcomes.push(ScoredOutcome { score: d.score, tp: r.tp });
                    }
                }
            }
            match cr.ap {
                None => assert_eq!(cr.n_gt, 0),
                Some(ap) => {
                    assert!((ap - oracle_ap(&outcomes, cr.n_gt)).abs() <= 1e-9);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 500);
}

#[test]
fn greedy_matching_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let (preds, gts) = micro_dataset(&mut rng, 2);
        for (img, p) in &preds {
            let g = &gts[img];
            let m = match_detections(p, g, 0.5);
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[b].score.total_cmp(&p[a].score).then(a.cmp(&b)));
            let mut taken = vec![false; g.len()];
            for &i in &order {
                // Nothing still free may beat the choice (or the threshold, for an FP).
                let best_free = (0..g.len())
                    .filter(|&j| !taken[j] && g[j].cls == p[i].cls)
                    .map(|j| iou(&p[i].bbox, &g[j].bbox))
                    .fold(f64::NEG_INFINITY, f64::max);
                match m.preds[i].gt {
                    Some(j) => {
                        assert!(m.preds[i].tp && g[j].cls == p[i].cls && !taken[j]);
                        let v = iou(&p[i].bbox, &g[j].bbox);
                        assert!(v >= 0.5 && v == best_free);
                        taken[j] = true;
                    }
                    None => assert!(!m.preds[i].tp && !(best_free >= 0.5)),
                }
            }
            let matched_gts = m.gts.iter().filter(|x| x.is_some()).count();
            assert_eq!(matched_gts, m.preds.iter().filter(|x| x.tp).count());
        }
    }
}

#[test]
fn map_ignores_class_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let fwd = ClassSet::new(["a", "b", "c"]).unwrap();
    let rev = ClassSet::new(["c", "b", "a"]).unwrap();
    let flip = |d: &Dataset| -> Dataset {
        d.iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|x| Detection { cls: ClassId(2 - x.cls.0), ..*x }).collect()))
            .collect()
    };
    for _ in 0..100 {
        let (p, g) = micro_dataset(&mut rng, 3);
        let a = evaluate_dataset(&p, &g, &fwd, &EvalConfig::default()).unwrap();
        let b = evaluate_dataset(&flip(&p), &flip(&g), &rev, &EvalConfig::default()).unwrap();
        // Summation order differs, so compare to rounding.
        assert!((a.map.unwrap_or(0.0) - b.map.unwrap_or(0.0)).abs() < 1e-12);
        for c in ["a", "b", "c"] {
            assert_eq!(a.class_ap(c), b.class_ap(c));
        }
    }
}

#[test]
fn ap_ignores_order_within_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(1..12);
        let mut o: Vec<ScoredOutcome> =
            (0..n).map(|_| ScoredOutcome { score: rng.random_range(1..=3) as f64, tp: rng.random_bool(0.5) }).collect();
        let n_gt = o.iter().filter(|x| x.tp).count() + rng.random_range(0..3);
        if n_gt == 0 {
            continue;
        }
        let a = average_precision(&o, n_gt, ApInterpolation::AllPoint);
        o.reverse();
        assert_eq!(a, average_precision(&o, n_gt, ApInterpolation::AllPoint));
    }
}

#[test]
fn point101_bounds_all_point_on_monotone_curves() {
    // When precision never rises with recall both interpolations see the
    // same envelope; 101-point samples it on a grid so the two agree on
    // step curves whose recall jumps land on multiples of 0.01.
    let o: Vec<ScoredOutcome> = (0..4).map(|i| ScoredOutcome { score: 1.0 - i as f64 / 10.0, tp: i != 1 }).collect();
    let (_, all) = average_precision(&o, 4, ApInterpolation::AllPoint);
    let (_, p101) = average_precision(&o, 4, ApInterpolation::Point101);
    // Curve: (0.25,1) (0.25,0.5) (0.5,2/3) (0.75,0.75); envelope 1, 0.75, 0.75.
    assert!((all.unwrap() - (0.25 + 0.5 * 0.75)).abs() < 1e-12);
    let expect = (26.0 * 1.0 + 50.0 * 0.75) / 101.0;
    assert!((p101.unwrap() - expect).abs() < 1e-12);
}

fn arb_manifest() -> impl Strategy<Value = LabelManifest> {
    (2usize..5).prop_flat_map(|k| {
        prop::collection::vec(prop::collection::vec(0u64..6, k), 1..40).prop_map(move |rows| {
            let images = rows
                .into_iter()
                .enumerate()
                .map(|(i, mut c)| {
                    if c.iter().all(|x| *x == 0) {
                        let n = c.len();
                        c[i % n] = 1;
                    }
                    ManifestImage { id: format!("i{i:03}"), counts: c }
                })
                .collect();
            LabelManifest { classes: (0..k).map(|c| format!("c{c}")).collect(), images }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn plan_projection_matches_recount(m in arb_manifest(), cap in 0.2f64..0.6, dup in prop::option::of(0u32..8)) {
        let cfg = AugmentConfig { majority_cap: cap, minority_floor: 0.05, dup_cap: dup };
        let plan = plan_augmentation(&m, &cfg).unwrap();
        let mut counts: Vec<u64> = m.totals();
        let by_id: BTreeMap<&str, &ManifestImage> = m.images.iter().map(|i| (i.id.as_str(), i)).collect();
        let mut per_image: BTreeMap<&str, u32> = BTreeMap::new();
        for d in &plan.duplicates {
            let img = by_id[d.image_id.as_str()];
            for (k, c) in img.counts.iter().enumerate() {
                counts[k] += c;
            }
            *per_image.entry(d.image_id.as_str()).or_default() += 1;
        }
        let total: u64 = counts.iter().sum();
        prop_assert_eq!(&counts, &plan.projected_counts);
        let shares: Vec<f64> = counts.iter().map(|c| *c as f64 / total as f64).collect();
        prop_assert_eq!(&shares, &plan.projected_shares);
        prop_assert_eq!(plan.projected_images, (m.images.len() + plan.duplicates.len()) as u64);
        let major = plan.majority_class.clone();
        let mk = m.classes.iter().position(|c| *c == major).unwrap();
        for (id, n) in per_image {
            let img = by_id[id];
            let dominant = (0..img.counts.len()).fold(0, |b, k| if img.counts[k] > img.counts[b] { k } else { b });
            prop_assert!(dominant != mk);
            if let Some(cap) = dup {
                prop_assert!(n <= cap);
            }
        }
    }

    #[test]
    fn split_is_a_stratified_partition(m in arb_manifest(), seed in any::<u64>(), a in 0.5f64..0.9) {
        let ratios = [a, (1.0 - a) / 2.0, (1.0 - a) / 2.0];
        let s = split_dataset(&m, ratios, seed).unwrap();
        prop_assert_eq!(s.assignment.len(), m.images.len());
        prop_assert_eq!(s.sizes.iter().sum::<usize>(), m.images.len());
        let mut counted = [0usize; 3];
        for sp in s.assignment.values() {
            counted[Split::ALL.iter().position(|x| x == sp).unwrap()] += 1;
        }
        prop_assert_eq!(counted, s.sizes);
        prop_assert_eq!(s.sizes.to_vec(), largest_remainder(m.images.len(), &ratios));
        for row in s.strata.values() {
            let n: usize = row.iter().sum();
            for j in 0..3 {
                prop_assert!((row[j] as f64 - n as f64 * ratios[j]).abs() < 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn relabelled_perfect_hypotheses(n in 1usize..6, len in 2u64..30, shift in 1u64..1000) {
        let gt: Vec<TrackBox> = (0..n as u64)
            .flat_map(|id| (0..len).map(move |f| TrackBox {
                frame: f,
                id,
                bbox: BBox::new(id as f64 * 100.0 + f as f64, 0.0, 30.0, 30.0).unwrap(),
            }))
            .collect();
        let hyp: Vec<TrackBox> = gt.iter().map(|b| TrackBox { id: b.id + shift, ..*b }).collect();
        let m = tracking_metrics(&gt, &hyp, 0.5);
        prop_assert_eq!((m.id_switches, m.fragmentations), (0, 0));
        prop_assert_eq!(m.track_recall, 1.0);
    }
}

#[test]
fn reference_plan_reaches_share_targets() {
    let m = reference_manifest();
    let t0 = Instant::now();
    let plan = plan_augmentation(&m, &AugmentConfig { dup_cap: None, ..AugmentConfig::default() }).unwrap();
    let elapsed = t0.elapsed();
    let major = m.classes.iter().position(|c| *c == plan.majority_class).unwrap();
    assert_eq!(plan.majority_class, "Car");
    assert!(plan.projected_shares[major] <= 0.41, "{:?}", plan.projected_shares);
    for (k, s) in plan.projected_shares.iter().enumerate() {
        if k != major {
            assert!(*s >= 0.04, "{} {s}", m.classes[k]);
        }
    }
    let total = plan.projected_images as f64;
    assert!((total - AUGMENTED_IMAGES as f64).abs() <= 0.1 * AUGMENTED_IMAGES as f64, "{total}");
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");

    // With five copies per image the rarest class cannot reach its floor.
    let capped = plan_augmentation(&m, &AugmentConfig::default()).unwrap();
    assert!(capped.unmet.iter().any(|u| u.class == "Bicycle"));
}

#[test]
fn reference_split_sizes() {
    let m = reference_manifest();
    let a = split_dataset(&m, [0.9, 0.05, 0.05], 42).unwrap();
    assert_eq!(m.images.len() as u64, IMAGES);
    assert_eq!(a.sizes, [74_430, 4_135, 4_135]);
    assert_eq!(a, split_dataset(&m, [0.9, 0.05, 0.05], 42).unwrap());
}
