//! Sparse symmetric LDLᵀ factorisation with a geometric nested-dissection
//! ordering.
//!
//! The factorisation is the classic up-looking scheme driven by the
//! elimination tree: row `k` of `L` is the reach of the pattern of column `k`
//! of the permuted matrix, computed by a sparse triangular solve. No
//! pivoting is done, so the matrix must be symmetric positive definite (or
//! at least strongly regular in the chosen ordering).

use thiserror::Error;

const NONE: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("zero pivot at permuted column {0}")]
    ZeroPivot(usize),
    #[error("right-hand side has length {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// Compressed-column symmetric matrix with both triangles stored.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    /// Each off-diagonal entry must be supplied for both triangles.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(_, c, _) in triplets {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let p = next[c];
            rows[p] = r;
            vals[p] = v;
            next[c] += 1;
        }
        // sort each column and merge duplicates
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..n {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(r, v) in &scratch {
                if row_idx.len() > col_ptr[c] && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr[c + 1] = row_idx.len();
        }
        Self { n, col_ptr, row_idx, values }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.values[p] * x[c];
            }
        }
        y
    }

    fn neighbours(&self, c: usize) -> &[usize] {
        &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]]
    }
}

/// Fill-reducing ordering by recursive coordinate bisection.
///
/// Returns `perm` with `perm[k]` = original index eliminated at step `k`.
pub fn nested_dissection(a: &CscMatrix, coords: &[[f64; 2]]) -> Vec<usize> {
    assert_eq!(coords.len(), a.n);
    let mut order = Vec::with_capacity(a.n);
    let mut side = vec![0u32; a.n];
    let all: Vec<usize> = (0..a.n).collect();
    dissect(a, coords, all, &mut order, &mut side, 1);
    order
}

fn dissect(a: &CscMatrix, coords: &[[f64; 2]], mut set: Vec<usize>, order: &mut Vec<usize>, side: &mut [u32], tag: u32) {
    if set.len() <= 48 {
        order.extend(set);
        return;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &i in &set {
        for d in 0..2 {
            lo[d] = lo[d].min(coords[i][d]);
            hi[d] = hi[d].max(coords[i][d]);
        }
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    let mid = set.len() / 2;
    set.select_nth_unstable_by(mid, |&x, &y| coords[x][axis].total_cmp(&coords[y][axis]));

    // mark halves with fresh tags so membership tests are O(1)
    let (left_tag, right_tag) = (2 * tag, 2 * tag + 1);
    for &i in &set[..mid] {
        side[i] = left_tag;
    }
    for &i in &set[mid..] {
        side[i] = right_tag;
    }
    let mut left = Vec::with_capacity(mid);
    let mut sep = Vec::new();
    for &i in &set[..mid] {
        if a.neighbours(i).iter().any(|&j| side[j] == right_tag) {
            sep.push(i);
        } else {
            left.push(i);
        }
    }
    let right: Vec<usize> = set[mid..].to_vec();
    // tags must not collide deep in the recursion; fall back to flat order
    if tag > u32::MAX / 4 {
        order.extend(left);
        order.extend(right);
        order.extend(sep);
        return;
    }
    dissect(a, coords, left, order, side, left_tag);
    dissect(a, coords, right, order, side, right_tag);
    order.extend(sep);
}

/// `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    diag: Vec<f64>,
}

/// Elimination tree and column counts, reusable for matrices with the same
/// pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
}

impl Symbolic {
    pub fn analyse(a: &CscMatrix, perm: Vec<usize>) -> Self {
        let n = a.n;
        let mut pinv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let kk = perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let mut i = pinv[a.row_idx[p]];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + lnz[k];
        }
        Self { n, perm, pinv, parent, l_ptr }
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }

    pub fn factor(&self, a: &CscMatrix) -> Result<Ldlt, SparseError> {
        let n = self.n;
        let nnz = self.factor_nnz();
        let mut l_idx = vec![0usize; nnz];
        let mut l_val = vec![0.0; nnz];
        let mut diag = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let kk = self.perm[k];
            for p in a.col_ptr[kk]..a.col_ptr[kk + 1] {
                let mut i = self.pinv[a.row_idx[p]];
                if i <= k {
                    y[i] += a.values[p];
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = self.parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let start = self.l_ptr[i];
                let end = start + lnz[i];
                for p in start..end {
                    y[l_idx[p]] -= l_val[p] * yi;
                }
                let lki = yi / diag[i];
                dk -= lki * yi;
                l_idx[end] = k;
                l_val[end] = lki;
                lnz[i] += 1;
            }
            if dk == 0.0 || !dk.is_finite() {
                return Err(SparseError::ZeroPivot(k));
            }
            diag[k] = dk;
        }
        Ok(Ldlt {
            n,
            perm: self.perm.clone(),
            l_ptr: self.l_ptr.clone(),
            l_idx,
            l_val,
            diag,
        })
    }
}

impl Ldlt {
    pub fn new(a: &CscMatrix, perm: Vec<usize>) -> Result<Self, SparseError> {
        Symbolic::analyse(a, perm).factor(a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        if b.len() != self.n {
            return Err(SparseError::Dimension { got: b.len(), expected: self.n });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for (xj, d) in x.iter_mut().zip(&self.diag) {
            *xj /= d;
        }
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                acc -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = acc;
        }
        let mut out = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        Ok(out)
    }

    /// Smallest and largest pivot magnitudes, a cheap conditioning hint.
    pub fn pivot_range(&self) -> (f64, f64) {
        self.diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(m: usize) -> (CscMatrix, Vec<[f64; 2]>) {
        let n = m * m;
        let idx = |i: usize, j: usize| i * m + j;
        let mut t = Vec::new();
        let mut coords = Vec::new();
        for i in 0..m {
            for j in 0..m {
                coords.push([i as f64, j as f64]);
                t.push((idx(i, j), idx(i, j), 4.01));
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        (CscMatrix::from_triplets(n, &t), coords)
    }

    #[test]
    fn solves_grid_laplacian() {
        let (a, coords) = grid_laplacian(40);
        let perm = nested_dissection(&a, &coords);
        let mut seen = vec![false; a.n];
        perm.iter().for_each(|&p| seen[p] = true);
        assert!(seen.iter().all(|&s| s));
        let f = Ldlt::new(&a, perm).unwrap();
        let x_true: Vec<f64> = (0..a.n).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let b = a.mul_vec(&x_true);
        let x = f.solve(&b).unwrap();
        let err = x.iter().zip(&x_true).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CscMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5), (1, 0, 0.5)]);
        assert_eq!(a.mul_vec(&[1.0, 0.0]), vec![3.0, 0.5]);
    }

    #[test]
    fn nested_dissection_beats_natural_fill() {
        let (a, coords) = grid_laplacian(60);
        let nd = Symbolic::analyse(&a, nested_dissection(&a, &coords)).factor_nnz();
        let natural = Symbolic::analyse(&a, (0..a.n).collect()).factor_nnz();
        assert!(nd < natural, "nd {nd} natural {natural}");
    }
}
