//! Label statistics of the reference ten-class detection dataset and a
//! manifest approximating it.

use crate::manifest::LabelManifest;

/// Labels per class, majority first.
pub const CLASS_COUNTS: [(&str, u64); 10] = [
    ("Car", 185_644),
    ("Person", 37_656),
    ("Heavy Truck", 12_369),
    ("Minibus", 10_777),
    ("Van", 9_251),
    ("Bus", 7_188),
    ("Motorcycle", 5_094),
    ("Taxi", 3_908),
    ("Light Truck", 3_185),
    ("Bicycle", 328),
];

pub const IMAGES: u64 = 82_700;
/// Stated label total. The per-class counts sum to 130 fewer; everything
/// here is computed from the per-class counts.
pub const STATED_LABELS: u64 = 275_530;
/// Image count after minority augmentation.
pub const AUGMENTED_IMAGES: u64 = 108_000;
/// Majority-class label share after augmentation.
pub const AUGMENTED_MAJORITY_SHARE: f64 = 0.40;

pub fn labels() -> u64 {
    CLASS_COUNTS.iter().map(|(_, c)| c).sum()
}

/// Minority labels per minority image implied by the augmented totals:
/// the labels needed to bring the majority share to
/// [`AUGMENTED_MAJORITY_SHARE`] divided by the images added.
pub fn minority_density() -> f64 {
    let majority = CLASS_COUNTS[0].1 as f64;
    let labels_after = majority / AUGMENTED_MAJORITY_SHARE;
    (labels_after - labels() as f64) / (AUGMENTED_IMAGES - IMAGES) as f64
}

/// Largest-remainder apportionment of `total` over `weights`, at least one each.
fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * *w as f64 / sum as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|e| (e.floor() as u64).max(1)).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut given: u64 = out.iter().sum();
    for &k in order.iter().cycle() {
        if given >= total {
            break;
        }
        out[k] += 1;
        given += 1;
    }
    out
}

/// Single-class images: minority classes at [`minority_density`] labels per
/// image, the majority class spread over the remaining images.
pub fn reference_manifest() -> LabelManifest {
    let names: Vec<&str> = CLASS_COUNTS.iter().map(|(n, _)| *n).collect();
    let totals: Vec<u64> = CLASS_COUNTS.iter().map(|(_, c)| *c).collect();
    let minority: Vec<u64> = totals[1..].to_vec();
    let minority_images = (minority.iter().sum::<u64>() as f64 / minority_density()).round() as u64;
    let mut images = vec![IMAGES - minority_images];
    images.extend(apportion(minority_images, &minority));
    LabelManifest::single_class(&names, &totals, &images).expect("reference manifest is consistent")
}
