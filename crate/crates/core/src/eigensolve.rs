//! Lowest eigenpairs of symmetric pencils K u = λ M u, multiplicity
//! clustering and guarded threshold counting.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SymmetricForm;
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Default relative gap separating multiplicity clusters.
pub const CLUSTER_REL_TOL: f64 = 0.02;
/// Eigenvalues below this magnitude are clustered together regardless of ratio.
pub const CLUSTER_ZERO_TOL: f64 = 1e-8;

/// Lowest eigenpairs of a pencil.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// M-orthonormal eigenvectors, one column per eigenvalue.
    pub eigenvectors: DMatrix<f64>,
    /// ‖K u − λ M u‖ / ‖M u‖ per pair.
    pub residual_norms: Vec<f64>,
    /// Index partition by relative gap (see [`cluster`]).
    pub clusters: Vec<Vec<usize>>,
    pub iterations: usize,
    /// The shift σ of the factorised preconditioner (0 for dense solves).
    pub shift: f64,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.len()).collect()
    }

    /// Cluster id of each eigenvalue index.
    pub fn cluster_ids(&self) -> Vec<usize> {
        let mut ids = vec![0; self.eigenvalues.len()];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                ids[i] = c;
            }
        }
        ids
    }

    /// CSV with header "index,eigenvalue,residual,cluster_id".
    pub fn to_csv(&self) -> String {
        let ids = self.cluster_ids();
        let mut out = String::from("index,eigenvalue,residual,cluster_id\n");
        for (i, (&l, &r)) in self.eigenvalues.iter().zip(&self.residual_norms).enumerate() {
            let _ = writeln!(out, "{i},{l:.12e},{r:.3e},{}", ids[i]);
        }
        out
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }
}

/// Preconditioner of the block iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    /// Exact solves with an envelope Cholesky factor of K + σM (default).
    #[default]
    ShiftedFactor,
    /// Inverse diagonal of K + σM.
    Diagonal,
    None,
}

/// Knobs of [`solve_lowest_with`].
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub preconditioner: Preconditioner,
    /// Problems up to this dimension are solved densely.
    pub dense_threshold: usize,
    /// A known lower bound for the spectrum (0 for stiffness pencils); used to
    /// place the initial preconditioner shift.
    pub lower_bound: Option<f64>,
    /// Extra block columns beyond the requested count.
    pub extra_block: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 400,
            seed: 42,
            preconditioner: Preconditioner::ShiftedFactor,
            dense_threshold: 400,
            lower_bound: None,
            extra_block: 8,
        }
    }
}

/// Lowest `count` eigenpairs of K u = λ M u with default options.
pub fn solve_lowest(k: &SymmetricForm, m: &SymmetricForm, count: usize, tol: f64, seed: u64) -> Result<SpectrumResult> {
    let opts = SolverOptions { tol, seed, ..Default::default() };
    solve_lowest_with(k, m, count, &opts)
}

/// Lowest `count` eigenpairs of K u = λ M u.
///
/// Small problems are solved densely. Larger ones use a block LOBPCG
/// iteration with B-orthonormal bases; if K annihilates constants the constant
/// vector is deflated and reinserted as the exact eigenpair λ = 0.
pub fn solve_lowest_with(k: &SymmetricForm, m: &SymmetricForm, count: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let n = k.dim();
    if m.dim() != n {
        return Err(Error::Validation(format!("pencil dimension mismatch: {} vs {}", n, m.dim())));
    }
    if count == 0 || count > n {
        return Err(Error::Validation(format!("requested {count} eigenpairs of a {n}-dimensional pencil")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Validation("solver tolerance must be positive".into()));
    }
    let block = count + opts.extra_block.max(count / 4);
    let mut result = if n <= opts.dense_threshold || 3 * block + 2 > n {
        if n > 6000 {
            return Err(Error::Validation(format!("requested {count} eigenpairs needs count < dimension/3 for {n} unknowns")));
        }
        dense_solve(k.matrix(), m.matrix(), count)?
    } else {
        lobpcg(k.matrix(), m.matrix(), count, block, opts)?
    };
    result.clusters = cluster(&result.eigenvalues, CLUSTER_REL_TOL);
    Ok(result)
}

fn dense_solve(a: &CsrMatrix, b: &CsrMatrix, count: usize) -> Result<SpectrumResult> {
    let (ad, bd) = (a.to_dense(), b.to_dense());
    let chol = bd
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Validation("mass form is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("mass factor not invertible".into()))?;
    let c = &linv * &ad * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let order = &order[..count];
    let lt_inv = linv.transpose();
    let mut vecs = DMatrix::zeros(ad.nrows(), count);
    let mut vals = Vec::with_capacity(count);
    for (col, &i) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        let v = &lt_inv * eig.eigenvectors.column(i);
        vecs.set_column(col, &v);
    }
    let residual_norms = residuals(a, b, &vals, &vecs);
    Ok(SpectrumResult { eigenvalues: vals, eigenvectors: vecs, residual_norms, clusters: vec![], iterations: 0, shift: 0.0 })
}

fn residuals(a: &CsrMatrix, b: &CsrMatrix, vals: &[f64], vecs: &DMatrix<f64>) -> Vec<f64> {
    let ax = a.mul_dense(vecs);
    let bx = b.mul_dense(vecs);
    (0..vals.len())
        .map(|j| {
            let r = ax.column(j) - bx.column(j) * vals[j];
            r.norm() / bx.column(j).norm().max(f64::MIN_POSITIVE)
        })
        .collect()
}

enum Precond {
    Factor(EnvelopeCholesky),
    Diagonal(Vec<f64>),
    Identity,
}

impl Precond {
    fn apply(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Precond::Factor(f) => {
                let mut out = DMatrix::zeros(r.nrows(), r.ncols());
                for j in 0..r.ncols() {
                    let x = f.solve(r.column(j).as_slice());
                    out.set_column(j, &DVector::from_vec(x));
                }
                out
            }
            Precond::Diagonal(d) => {
                let mut out = r.clone();
                for j in 0..r.ncols() {
                    for i in 0..r.nrows() {
                        out[(i, j)] /= d[i];
                    }
                }
                out
            }
            Precond::Identity => r.clone(),
        }
    }
}

fn build_precond(kind: Preconditioner, a: &CsrMatrix, b: &CsrMatrix, sigma: f64) -> Result<Precond> {
    match kind {
        Preconditioner::ShiftedFactor => Ok(Precond::Factor(EnvelopeCholesky::factor(&a.add_scaled(1.0, b, sigma))?)),
        Preconditioner::Diagonal => {
            let (da, db) = (a.diag(), b.diag());
            let d: Vec<f64> = da.iter().zip(&db).map(|(x, y)| (x + sigma * y).abs().max(f64::MIN_POSITIVE)).collect();
            Ok(Precond::Diagonal(d))
        }
        Preconditioner::None => Ok(Precond::Identity),
    }
}

/// Factor K + σM at the smallest σ ≥ `sigma` (growing geometrically) that is positive definite.
fn shifted_precond(kind: Preconditioner, a: &CsrMatrix, b: &CsrMatrix, mut sigma: f64, pad: f64) -> Result<(Precond, f64)> {
    for _ in 0..60 {
        match build_precond(kind, a, b, sigma) {
            Ok(p) => return Ok((p, sigma)),
            Err(Error::Numerical(_)) => sigma = if sigma <= 0.0 { pad } else { 2.0 * sigma + pad },
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical("no positive definite shift found for the preconditioner".into()))
}

/// X ← X − Y (Yᵀ B X), twice.
fn project_out(x: &mut DMatrix<f64>, y: &DMatrix<f64>, by: &DMatrix<f64>) {
    if y.ncols() == 0 || x.ncols() == 0 {
        return;
    }
    for _ in 0..2 {
        let c = by.tr_mul(x);
        *x -= y * c;
    }
}

/// B-orthonormalise the columns of X by singular-value QR, dropping
/// numerically dependent directions.
fn b_orthonormalize(x: &DMatrix<f64>, b: &CsrMatrix, drop_tol: f64) -> DMatrix<f64> {
    let mut q = x.clone();
    for _ in 0..2 {
        if q.ncols() == 0 {
            return q;
        }
        let bq = b.mul_dense(&q);
        let g = q.tr_mul(&bq);
        let d: Vec<f64> = (0..g.nrows()).map(|i| 1.0 / g[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
        let mut gs = g.clone();
        for i in 0..gs.nrows() {
            for j in 0..gs.ncols() {
                gs[(i, j)] *= d[i] * d[j];
            }
        }
        let gs = (&gs + gs.transpose()) * 0.5;
        let eig = SymmetricEigen::new(gs);
        let smax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > drop_tol * smax).collect();
        let mut t = DMatrix::zeros(q.ncols(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            for r in 0..q.ncols() {
                t[(r, c)] = d[r] * eig.eigenvectors[(r, i)] / s;
            }
        }
        q = &q * t;
    }
    q
}

fn lobpcg(a: &CsrMatrix, b: &CsrMatrix, count: usize, block: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let n = a.n;
    // deflate constants when they span the kernel of the stiffness
    let ones = vec![1.0; n];
    let a1 = a.mul_vec(&ones);
    let diag_scale = a.diag().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let deflate = a1.iter().all(|v| v.abs() <= 1e-11 * diag_scale.max(1.0));
    let mut y = DMatrix::zeros(n, 0);
    if deflate {
        let norm = b.bilinear(&ones, &ones).sqrt();
        y = DMatrix::from_element(n, 1, 1.0 / norm);
    }
    let by = b.mul_dense(&y);
    let ndefl = y.ncols();
    let want = count.saturating_sub(ndefl);
    if want == 0 {
        return finish(a, b, &y, &DMatrix::zeros(n, 0), &[], count, 0, 0.0);
    }

    let trace_ratio = a.diag().iter().map(|v| v.abs()).sum::<f64>() / b.diag().iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let pad = 1e-8 * trace_ratio.max(f64::MIN_POSITIVE);
    let lower = opts.lower_bound.unwrap_or(0.0);
    let (mut precond, mut sigma) = shifted_precond(opts.preconditioner, a, b, (-lower).max(0.0) + pad, pad)?;
    let mut refactored = false;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let nb = (block - ndefl).max(want);
    let mut x = DMatrix::from_fn(n, nb, |_, _| StandardNormal.sample(&mut rng));
    project_out(&mut x, &y, &by);
    x = b_orthonormalize(&x, b, 1e-14);
    let (mut x, mut theta) = rayleigh_ritz(a, b, &x, nb);
    let mut p: DMatrix<f64> = DMatrix::zeros(n, 0);
    let mut best: (f64, Vec<f64>, Vec<f64>) = (f64::INFINITY, vec![], vec![]);

    for it in 0..opts.max_iter {
        let ax = a.mul_dense(&x);
        let bx = b.mul_dense(&x);
        let mut r = ax.clone();
        for j in 0..x.ncols() {
            let col = bx.column(j) * theta[j];
            let mut rc = r.column_mut(j);
            rc -= col;
        }
        let res: Vec<f64> = (0..x.ncols()).map(|j| r.column(j).norm() / bx.column(j).norm()).collect();
        let worst = res[..want].iter().copied().fold(0.0, f64::max);
        if worst < best.0 {
            best = (worst, theta[..want].to_vec(), res[..want].to_vec());
        }
        if worst < opts.tol {
            return finish(a, b, &y, &x.columns(0, want).into_owned(), &theta[..want], count, it, sigma);
        }
        // move the shift next to the bottom of the spectrum once Ritz values settle
        if !refactored && it == 4 && opts.preconditioner != Preconditioner::None {
            let bottom = if ndefl > 0 { 0.0f64.min(theta[0]) } else { theta[0] };
            let spread = (theta[nb - 1] - bottom).abs().max(pad);
            let candidate = -bottom + 0.05 * spread;
            if candidate < sigma - 0.1 * spread {
                if let Ok((pc, s)) = shifted_precond(opts.preconditioner, a, b, candidate, 0.05 * spread) {
                    if s < sigma {
                        precond = pc;
                        sigma = s;
                    }
                }
            }
            refactored = true;
        }
        let active: Vec<usize> = (0..nb).filter(|&j| res[j] >= 0.1 * opts.tol).collect();
        let mut w = DMatrix::zeros(n, active.len());
        for (c, &j) in active.iter().enumerate() {
            w.set_column(c, &r.column(j));
        }
        let mut w = precond.apply(&w);
        let mut q = if p.ncols() > 0 { concat(&w, &p) } else { w.clone() };
        project_out(&mut q, &y, &by);
        // B-orthogonalise against X (X is B-orthonormal)
        for _ in 0..2 {
            let c = bx.tr_mul(&q);
            q -= &x * c;
        }
        q = b_orthonormalize(&q, b, 1e-12);
        project_out(&mut q, &y, &by);
        let s = concat(&x, &q);
        let (c, vals) = ritz_coefficients(a, b, &s, nb)?;
        let new_x = &s * &c;
        let cq = c.rows(x.ncols(), q.ncols()).into_owned();
        p = &q * cq;
        x = new_x;
        theta = vals;
        w.fill(0.0);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        worst_residual: best.0,
        best_eigenvalues: best.1,
        best_residuals: best.2,
    })
}

fn concat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Generalised Rayleigh–Ritz on span(S): lowest `k` coefficient vectors and values.
fn ritz_coefficients(a: &CsrMatrix, b: &CsrMatrix, s: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let ga = s.tr_mul(&a.mul_dense(s));
    let gb = s.tr_mul(&b.mul_dense(s));
    let ga = (&ga + ga.transpose()) * 0.5;
    let gb = (&gb + gb.transpose()) * 0.5;
    let chol = gb.cholesky().ok_or_else(|| Error::Numerical("Rayleigh–Ritz Gram matrix lost definiteness".into()))?;
    let l = chol.l();
    let linv = l.try_inverse().ok_or_else(|| Error::Numerical("singular Gram factor".into()))?;
    let c = &linv * ga * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let k = k.min(order.len());
    let lt_inv = linv.transpose();
    let mut coeff = DMatrix::zeros(s.ncols(), k);
    let mut vals = Vec::with_capacity(k);
    for (col, &i) in order[..k].iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        coeff.set_column(col, &(&lt_inv * eig.eigenvectors.column(i)));
    }
    Ok((coeff, vals))
}

fn rayleigh_ritz(a: &CsrMatrix, b: &CsrMatrix, x: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (c, vals) = ritz_coefficients(a, b, x, k).expect("initial block is B-orthonormal");
    (x * c, vals)
}

#[allow(clippy::too_many_arguments)]
fn finish(a: &CsrMatrix, b: &CsrMatrix, y: &DMatrix<f64>, x: &DMatrix<f64>, theta: &[f64], count: usize, iterations: usize, shift: f64) -> Result<SpectrumResult> {
    let n = a.n;
    let mut vals: Vec<f64> = Vec::with_capacity(count);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(count);
    for j in 0..y.ncols() {
        let v = y.column(j).into_owned();
        vals.push(a.bilinear(v.as_slice(), v.as_slice()));
        cols.push(v);
    }
    for j in 0..x.ncols() {
        vals.push(theta[j]);
        cols.push(x.column(j).into_owned());
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    order.truncate(count);
    let mut vecs = DMatrix::zeros(n, order.len());
    let mut sorted = Vec::with_capacity(order.len());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &cols[i]);
        sorted.push(vals[i]);
    }
    let residual_norms = residuals(a, b, &sorted, &vecs);
    Ok(SpectrumResult { eigenvalues: sorted, eigenvectors: vecs, residual_norms, clusters: vec![], iterations, shift })
}

/// Partition ascending eigenvalues into maximal runs whose consecutive
/// relative gaps are below `rel_tol`; values near zero cluster together.
pub fn cluster(eigenvalues: &[f64], rel_tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in eigenvalues.iter().enumerate() {
        let joins = i > 0 && {
            let prev = eigenvalues[i - 1];
            let both_zero = prev.abs() < CLUSTER_ZERO_TOL && l.abs() < CLUSTER_ZERO_TOL;
            let scale = prev.abs().max(l.abs());
            both_zero || (scale > 0.0 && (l - prev).abs() / scale < rel_tol)
        };
        if joins {
            out.last_mut().unwrap().push(i);
        } else {
            out.push(vec![i]);
        }
    }
    out
}

/// Guarded count of eigenvalues below and at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCount {
    pub below: usize,
    pub at: usize,
    pub guard_band: f64,
    /// Counts agree when the guard is scaled by 0.75 and 1.25.
    pub stable: bool,
}

fn raw_count(eigenvalues: &[f64], threshold: f64, guard: f64) -> (usize, usize) {
    let below = eigenvalues.iter().filter(|&&l| l < threshold - guard).count();
    let at = eigenvalues.iter().filter(|&&l| (l - threshold).abs() <= guard).count();
    (below, at)
}

/// Count eigenvalues below `threshold − guard` and within `guard` of the threshold.
pub fn count_threshold(spec: &SpectrumResult, threshold: f64, guard: f64) -> Result<ThresholdCount> {
    count_threshold_values(&spec.eigenvalues, threshold, guard, false)
}

/// As [`count_threshold`] on bare eigenvalues; `complete` marks a full spectrum.
pub fn count_threshold_values(eigenvalues: &[f64], threshold: f64, guard: f64, complete: bool) -> Result<ThresholdCount> {
    if !(guard >= 0.0) {
        return Err(Error::Validation(format!("guard band must be ≥ 0, got {guard}")));
    }
    let needed = threshold + 1.25 * guard;
    let largest = eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY);
    if !complete && !(largest > needed) {
        return Err(Error::InsufficientSpectrum { largest, needed });
    }
    let (below, at) = raw_count(eigenvalues, threshold, guard);
    let stable = raw_count(eigenvalues, threshold, 0.75 * guard) == (below, at)
        && raw_count(eigenvalues, threshold, 1.25 * guard) == (below, at);
    Ok(ThresholdCount { below, at, guard_band: guard, stable })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_examples() {
        let parts = cluster(&[0.0, 1.99, 2.00, 2.01, 6.0], 0.02);
        assert_eq!(parts, vec![vec![0], vec![1, 2, 3], vec![4]]);
        assert!(cluster(&[], 0.02).is_empty());
        assert_eq!(cluster(&[1e-12, -1e-12, 1.0], 0.02), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn identity_pencil_has_unit_spectrum() {
        let k = SymmetricForm::identity(30);
        let s = solve_lowest(&k, &k, 5, 1e-10, 1).unwrap();
        assert!(s.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn threshold_counts_and_guards() {
        let vals = vec![0.0, 2.0, 2.0, 2.0, 6.0];
        let c = count_threshold_values(&vals, 2.0, 0.1, false).unwrap();
        assert_eq!((c.below, c.at, c.stable), (1, 3, true));
        let c = count_threshold_values(&vals, 0.5, 0.025, false).unwrap();
        assert_eq!((c.below, c.at), (1, 0));
        // guard reaching exactly one cluster member is unstable under ±25 %
        let c = count_threshold_values(&[0.0, 1.0, 3.0, 5.0], 2.0, 1.0, false).unwrap();
        assert!(!c.stable);
        assert!(matches!(
            count_threshold_values(&[0.0, 1.0], 2.0, 0.1, false),
            Err(Error::InsufficientSpectrum { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_validation_error() {
        let a = SymmetricForm::identity(3);
        let b = SymmetricForm::identity(4);
        assert!(matches!(solve_lowest(&a, &b, 1, 1e-8, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let k = SymmetricForm::diagonal(&[3.0, 1.0, 2.0, 5.0]);
        let m = SymmetricForm::identity(4);
        let s = solve_lowest(&k, &m, 3, 1e-10, 0).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        let csv = s.to_csv();
        assert!(csv.starts_with("index,eigenvalue,residual,cluster_id\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
