//! Compressed-row symmetric matrices and an envelope (profile) Cholesky
//! factorisation with reverse Cuthill–McKee ordering.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form; columns sorted within rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed in a
    /// fixed order (sorted by position, then by input order).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1, k));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}×{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        CsrMatrix {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    /// Y = A X for a dense block of column vectors.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let xs = col.as_slice();
            let mut out = y.column_mut(j);
            let ys = out.as_mut_slice();
            self.mul_vec_into(xs, ys);
        }
        y
    }

    /// xᵀ A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// α A + β B.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.n {
            trip.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            trip.extend(other.row(r).map(|(c, v)| (r, c, beta * v)));
        }
        CsrMatrix::from_triplets(self.n, &trip)
    }

    /// Pᵀ A P for a sparse rectangular P given as per-row lists of (col, value).
    pub fn congruence(&self, p_rows: &[Vec<(usize, f64)>], ncols: usize) -> CsrMatrix {
        assert_eq!(p_rows.len(), self.n);
        let mut trip = Vec::new();
        for r in 0..self.n {
            for (c, a) in self.row(r) {
                for &(i, pi) in &p_rows[r] {
                    for &(j, pj) in &p_rows[c] {
                        trip.push((i, j, pi * a * pj));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(ncols, &trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Largest |A_ij − A_ji|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// MatrixMarket coordinate export (symmetric, lower triangle).
    pub fn to_matrix_market(&self) -> String {
        let mut entries = Vec::new();
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                if c <= r {
                    entries.push((r, c, v));
                }
            }
        }
        let mut out = String::new();
        out.push_str("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, entries.len());
        for (r, c, v) in entries {
            let _ = writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        out
    }
}

/// Reverse Cuthill–McKee ordering of the sparsity graph; `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|r| a.row(r).filter(|&(c, _)| c != r).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // start from a pseudo-peripheral vertex of this component
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(c, _)| c).filter(|&c| !visited[c]).collect();
            nbrs.sort_by_key(|&c| (degree[c], c));
            for c in nbrs {
                if !visited[c] {
                    visited[c] = true;
                    queue.push_back(c);
                }
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut current_ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(a, current);
        let ecc = levels.iter().filter(|&&l| l != usize::MAX).copied().max().unwrap_or(0);
        if ecc <= current_ecc && current != seed {
            break;
        }
        current_ecc = ecc;
        let far = (0..a.n)
            .filter(|&i| levels[i] == ecc)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
        if far == current {
            break;
        }
        current = far;
    }
    current
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.n];
    let mut queue = VecDeque::new();
    level[start] = 0;
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        for (c, _) in a.row(v) {
            if level[c] == usize::MAX {
                level[c] = level[v] + 1;
                queue.push_back(c);
            }
        }
    }
    level
}

/// Cholesky factor A = L Lᵀ stored by rows in envelope (skyline) form,
/// after a symmetric permutation that reduces the profile.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// first stored column of each (permuted) row
    first: Vec<usize>,
    /// offset of each row's storage in `data`
    start: Vec<usize>,
    /// row i holds L[i, first[i]..=i]
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factor a symmetric positive definite matrix; fails on a non-positive pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0usize; n];
        for new in 0..n {
            let old = perm[new];
            first[new] = a.row(old).map(|(c, _)| inv[c]).filter(|&c| c <= new).min().unwrap_or(new);
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for new in 0..n {
            for (c, v) in a.row(perm[new]) {
                let cn = inv[c];
                if cn <= new {
                    data[start[new] + cn - first[new]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = &data[start[i] + k0 - fi..start[i] + j - fi];
                let rj = &data[start[j] + k0 - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                data[start[i] + j - fi] = s / data[start[j] + j - fj];
            }
            let row = &data[start[i]..start[i] + i - fi];
            let pivot = data[start[i] + i - fi] - row.iter().map(|x| x * x).sum::<f64>();
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::Numerical(format!("matrix not positive definite (pivot {pivot:e} at row {i})")));
            }
            data[start[i] + i - fi] = pivot.sqrt();
        }
        Ok(EnvelopeCholesky { n, perm, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i] + i - fi];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] = (y[i] - s) / self.data[self.start[i] + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.data[self.start[i] + i - fi];
            let yi = y[i];
            let row = &self.data[self.start[i]..self.start[i] + i - fi];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_path(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        // close into a ring so the ordering has work to do
        t.push((0, n - 1, -1.0));
        t.push((n - 1, 0, -1.0));
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn cholesky_solves_ring_system() {
        let a = laplacian_path(50, 0.3);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let r = a.mul_vec(&x);
        let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "residual {err}");
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = laplacian_path(10, -1.0);
        assert!(EnvelopeCholesky::factor(&a).is_err());
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_path(30, 0.0);
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn matrix_market_header() {
        let a = CsrMatrix::identity(3);
        let mm = a.to_matrix_market();
        assert!(mm.starts_with("%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n"));
    }
}
