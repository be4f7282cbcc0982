//! Class-imbalance planning by duplicating minority-bearing images.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::manifest::{dominant_class, LabelManifest};
use crate::EvalError;

/// Transform tags assigned to duplicates in rotation.
pub const TRANSFORMS: [&str; 6] = [
    "gamma_contrast",
    "additive_gaussian_noise",
    "add_to_hue_and_saturation",
    "all_channels_clahe",
    "histogram_equalization",
    "random_black_mask",
];

/// Upper bound on duplicates per manifest image, on average, so that
/// targets approached only asymptotically still terminate.
pub const MAX_DUPLICATION_FACTOR: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub majority_cap: f64,
    pub minority_floor: f64,
    /// Maximum duplicates per image; `None` is unbounded.
    pub dup_cap: Option<u32>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { majority_cap: 0.40, minority_floor: 0.05, dup_cap: Some(5) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Duplicate {
    pub image_id: String,
    /// 1-based copy number of this image.
    pub copy: u32,
    pub transform: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmetTarget {
    pub class: String,
    pub share: f64,
    /// `"majority_cap"` or `"minority_floor"`.
    pub target: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub majority_class: String,
    pub duplicates: Vec<Duplicate>,
    /// Duplicate count per image id, for images with at least one.
    pub per_image: BTreeMap<String, u32>,
    pub projected_counts: Vec<u64>,
    pub projected_shares: Vec<f64>,
    pub projected_images: u64,
    pub projected_labels: u64,
    /// Empty when every target is met.
    pub unmet: Vec<UnmetTarget>,
}

impl AugmentationPlan {
    pub fn is_feasible(&self) -> bool {
        self.unmet.is_empty()
    }

    pub fn summary_csv(&self, classes: &[String]) -> String {
        let mut s = String::from("class,projected_count,projected_share\n");
        for (k, c) in classes.iter().enumerate() {
            s.push_str(&format!("{c},{},{}\n", self.projected_counts[k], self.projected_shares[k]));
        }
        s.push_str(&format!("TOTAL_IMAGES,{},\n", self.projected_images));
        s
    }
}

/// Images sharing one label composition; duplicates rotate over members.
struct Group {
    counts: Vec<u64>,
    members: Vec<usize>,
    added: u64,
}

struct State<'a> {
    cfg: &'a AugmentConfig,
    major: usize,
    counts: Vec<u64>,
    labels: u64,
}

impl State<'_> {
    fn deficit(&self, add: Option<&[u64]>, open: &[bool]) -> f64 {
        let added: u64 = add.map_or(0, |a| a.iter().sum());
        let l = (self.labels + added) as f64;
        let n = |k: usize| (self.counts[k] + add.map_or(0, |a| a[k])) as f64;
        let mut d = 0.0;
        for k in 0..self.counts.len() {
            if k == self.major {
                let share = n(k) / l;
                if share > self.cfg.majority_cap {
                    d += share - self.cfg.majority_cap;
                }
            } else if open[k] {
                let share = n(k) / l;
                if share < self.cfg.minority_floor {
                    d += self.cfg.minority_floor - share;
                }
            }
        }
        d
    }
}

fn validate(cfg: &AugmentConfig) -> Result<(), EvalError> {
    let unit = |x: f64| x > 0.0 && x < 1.0;
    if !unit(cfg.majority_cap) || !(cfg.minority_floor >= 0.0 && cfg.minority_floor < 1.0) {
        return Err(EvalError::Config("majority_cap must be in (0, 1) and minority_floor in [0, 1)".into()));
    }
    Ok(())
}

/// Greedy planner over a deficit measure: the majority share above the cap
/// plus every reachable minority's shortfall below the floor. Each step
/// duplicates the image whose composition removes the most deficit per
/// added majority label (plus one), and stops when the deficit is zero or
/// no image reduces it. Images whose dominant class is the majority are
/// never duplicated. At most [`MAX_DUPLICATION_FACTOR`] duplicates per
/// manifest image are planned in total.
pub fn plan_augmentation(m: &LabelManifest, cfg: &AugmentConfig) -> Result<AugmentationPlan, EvalError> {
    m.validate()?;
    validate(cfg)?;
    let totals = m.totals();
    let major = dominant_class(&totals);
    let n_classes = m.classes.len();

    let mut by_comp: BTreeMap<&[u64], usize> = BTreeMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for (i, img) in m.images.iter().enumerate() {
        if m.dominant(i) == major {
            continue;
        }
        let g = *by_comp.entry(img.counts.as_slice()).or_insert_with(|| {
            groups.push(Group { counts: img.counts.clone(), members: Vec::new(), added: 0 });
            groups.len() - 1
        });
        groups[g].members.push(i);
    }
    let capacity = |g: &Group| cfg.dup_cap.map_or(u64::MAX, |c| c as u64 * g.members.len() as u64);

    let mut st = State { cfg, major, labels: totals.iter().sum(), counts: totals };
    let mut order: Vec<usize> = Vec::new();
    let budget = MAX_DUPLICATION_FACTOR * m.images.len() as u64;
    while (order.len() as u64) < budget {
        // A minority is reachable while some open image still carries it.
        let mut open = vec![false; n_classes];
        for g in groups.iter().filter(|g| g.added < capacity(g)) {
            for (k, c) in g.counts.iter().enumerate() {
                if *c > 0 {
                    open[k] = true;
                }
            }
        }
        let d0 = st.deficit(None, &open);
        if d0 <= 0.0 {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in groups.iter().enumerate() {
            if g.added >= capacity(g) {
                continue;
            }
            let gain = (d0 - st.deficit(Some(&g.counts), &open)) / (1 + g.counts[major]) as f64;
            if gain > 0.0 && best.map_or(true, |(_, b)| gain > b) {
                best = Some((gi, gain));
            }
        }
        let Some((gi, _)) = best else {
            break;
        };
        let g = &mut groups[gi];
        let member = g.members[(g.added % g.members.len() as u64) as usize];
        g.added += 1;
        for (k, c) in g.counts.iter().enumerate() {
            st.counts[k] += c;
            st.labels += c;
        }
        order.push(member);
    }

    let mut per_image: BTreeMap<String, u32> = BTreeMap::new();
    let mut duplicates = Vec::with_capacity(order.len());
    for (n, &i) in order.iter().enumerate() {
        let id = &m.images[i].id;
        let copy = per_image.entry(id.clone()).or_insert(0);
        *copy += 1;
        duplicates.push(Duplicate {
            image_id: id.clone(),
            copy: *copy,
            transform: TRANSFORMS[n % TRANSFORMS.len()].to_string(),
        });
    }
    let labels = st.labels;
    let shares: Vec<f64> = st.counts.iter().map(|c| *c as f64 / labels as f64).collect();
    let mut unmet = Vec::new();
    for (k, share) in shares.iter().enumerate() {
        if k == major && *share > cfg.majority_cap {
            unmet.push(UnmetTarget {
                class: m.classes[k].clone(),
                share: *share,
                target: "majority_cap".into(),
                value: cfg.majority_cap,
            });
        } else if k != major && *share < cfg.minority_floor {
            unmet.push(UnmetTarget {
                class: m.classes[k].clone(),
                share: *share,
                target: "minority_floor".into(),
                value: cfg.minority_floor,
            });
        }
    }
    Ok(AugmentationPlan {
        majority_class: m.classes[major].clone(),
        projected_images: (m.images.len() + duplicates.len()) as u64,
        duplicates,
        per_image,
        projected_counts: st.counts,
        projected_shares: shares,
        projected_labels: labels,
        unmet,
    })
}
