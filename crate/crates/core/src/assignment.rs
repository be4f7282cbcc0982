//! Linear assignment: Hungarian (shortest augmenting path) and greedy.

use crate::scalar::Scalar;

/// Dense row-major matrix used for assignment costs and scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }
}

/// Minimum-cost assignment; returns `row -> col` for every row that received
/// a column. Every row is assigned when `rows <= cols`, otherwise every column.
///
/// Columns are scanned in ascending order with strict comparisons, so the
/// result is a deterministic function of the matrix.
pub fn hungarian<S: Scalar>(costs: &Matrix<S>) -> Vec<Option<usize>> {
    let (n, m) = (costs.rows, costs.cols);
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let t = Matrix::from_fn(m, n, |r, c| costs.get(c, r));
        let col_to_row = hungarian(&t);
        let mut out = vec![None; n];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }

    let inf = S::infinity();
    let mut u = vec![S::zero(); n + 1];
    let mut v = vec![S::zero(); m + 1];
    // p[j]: 1-based row matched to column j (0 = free); column 0 is the virtual root.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 {
                // Only reachable with NaN costs; leave the row unassigned.
                break;
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        if p[j0] != 0 {
            continue;
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Greedy maximum-score matching: repeatedly takes the highest remaining
/// score, ties by lowest `(row, col)`.
pub fn greedy_max<S: Scalar>(scores: &Matrix<S>) -> Vec<Option<usize>> {
    let mut pairs: Vec<(usize, usize)> = (0..scores.rows)
        .flat_map(|r| (0..scores.cols).map(move |c| (r, c)))
        .collect();
    pairs.sort_by(|a, b| {
        scores
            .get(b.0, b.1)
            .partial_cmp(&scores.get(a.0, a.1))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut row_used = vec![None; scores.rows];
    let mut col_used = vec![false; scores.cols];
    for (r, c) in pairs {
        if row_used[r].is_none() && !col_used[c] {
            row_used[r] = Some(c);
            col_used[c] = true;
        }
    }
    row_used
}
