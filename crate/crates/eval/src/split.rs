//! Seeded train/valid/test split stratified by each image's dominant class.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::LabelManifest;
use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Split>,
    /// Train, valid and test sizes.
    pub sizes: [usize; 3],
    /// Per dominant class: sizes in the same order.
    pub strata: BTreeMap<String, [usize; 3]>,
}

impl SplitAssignment {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image_id,split\n");
        for (id, sp) in &self.assignment {
            s.push_str(&format!("{id},{}\n", sp.as_str()));
        }
        s
    }
}

fn snap(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x
    }
}

/// Largest-remainder rounding of `n · ratios`.
pub fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| snap(n as f64 * r)).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - out.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        out[k] += 1;
    }
    out
}

/// Rounds the stratum × split table so each row sums to its stratum size,
/// each column to its global largest-remainder size, and every cell is its
/// exact value rounded up or down.
fn controlled_rounding(strata: &[usize], ratios: &[f64; 3]) -> Vec<[usize; 3]> {
    let n: usize = strata.iter().sum();
    let target = largest_remainder(n, ratios);
    let exact: Vec<[f64; 3]> = strata.iter().map(|&s| ratios.map(|r| snap(s as f64 * r))).collect();
    let mut cells: Vec<[usize; 3]> = exact.iter().map(|e| e.map(|x| x.floor() as usize)).collect();
    let mut row_left: Vec<usize> = strata.iter().zip(&cells).map(|(s, c)| s - c.iter().sum::<usize>()).collect();
    let mut col_left: Vec<usize> =
        (0..3).map(|j| target[j] - cells.iter().map(|c| c[j]).sum::<usize>()).collect();
    let mut up = vec![[false; 3]; strata.len()];

    let mut order: Vec<(usize, usize)> = (0..strata.len()).flat_map(|s| (0..3).map(move |j| (s, j))).collect();
    let frac = |s: usize, j: usize| exact[s][j] - exact[s][j].floor();
    order.sort_by(|&(s, j), &(t, k)| frac(t, k).total_cmp(&frac(s, j)).then((s, j).cmp(&(t, k))));
    for &(s, j) in &order {
        if row_left[s] > 0 && col_left[j] > 0 && frac(s, j) > 0.0 {
            up[s][j] = true;
            row_left[s] -= 1;
            col_left[j] -= 1;
        }
    }
    // Remaining units move along alternating paths: stratum s takes column
    // j0; a stratum already rounded up in a full column shifts to another.
    for s in 0..strata.len() {
        while row_left[s] > 0 {
            let mut parent: [Option<(usize, usize)>; 3] = [None; 3];
            let mut seen = [false; 3];
            let mut queue = VecDeque::new();
            for j in 0..3 {
                if !up[s][j] && frac(s, j) > 0.0 {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
            let mut found = None;
            while let Some(j) = queue.pop_front() {
                if col_left[j] > 0 {
                    found = Some(j);
                    break;
                }
                for t in 0..strata.len() {
                    if !up[t][j] {
                        continue;
                    }
                    for k in 0..3 {
                        if !seen[k] && !up[t][k] && frac(t, k) > 0.0 {
                            seen[k] = true;
                            parent[k] = Some((j, t));
                            queue.push_back(k);
                        }
                    }
                }
            }
            let Some(mut j) = found else {
                // Unbalanced ratios: round this stratum independently.
                let k = (0..3).filter(|&k| !up[s][k]).max_by(|&a, &b| frac(s, a).total_cmp(&frac(s, b))).unwrap_or(0);
                up[s][k] = true;
                row_left[s] -= 1;
                continue;
            };
            col_left[j] -= 1;
            while let Some((prev, t)) = parent[j] {
                up[t][j] = true;
                up[t][prev] = false;
                j = prev;
            }
            up[s][j] = true;
            row_left[s] -= 1;
        }
    }
    for (c, u) in cells.iter_mut().zip(&up) {
        for j in 0..3 {
            c[j] += usize::from(u[j]);
        }
    }
    cells
}

pub fn split_dataset(m: &LabelManifest, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, EvalError> {
    m.validate()?;
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(EvalError::Config("split ratios must be non-negative and sum to 1".into()));
    }
    let mut strata: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (i, img) in m.images.iter().enumerate() {
        strata.entry(m.dominant(i)).or_default().push(&img.id);
    }
    let sizes_in: Vec<usize> = strata.values().map(Vec::len).collect();
    let table = controlled_rounding(&sizes_in, &ratios);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment { assignment: BTreeMap::new(), sizes: [0; 3], strata: BTreeMap::new() };
    for ((class, ids), row) in strata.into_iter().zip(table) {
        let mut ids = ids;
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let mut it = ids.into_iter();
        for (j, split) in Split::ALL.iter().enumerate() {
            for id in it.by_ref().take(row[j]) {
                out.assignment.insert(id.to_string(), *split);
            }
            out.sizes[j] += row[j];
        }
        out.strata.insert(m.classes[class].clone(), row);
    }
    Ok(out)
}
