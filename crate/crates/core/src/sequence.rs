//! Harmonic sequences f_p of a harmonic map S² → S^{2m} in local charts, the
//! pointwise identities they satisfy, conjugate Jacobi fields V* = 2 Im V₊,
//! and the γ̂ chain built from a Jacobi field.
//!
//! Everything here is local: sections are represented by truncated Taylor
//! jets at sample points of a chart, obtained either analytically from the
//! map or by finite differences of sampled values.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{bilinear, dz_vec, dzb_vec, hermitian, norm_sqr, scale_vec, sub_vec, Jet};
use crate::maps::{chart_point_jets, HarmonicMap, Poly3};
use crate::mesh::{icosphere, Chart, ChartGrid, Vec3};

/// Residual tolerance for identities evaluated with analytic jets.
pub const ANALYTIC_TOL: f64 = 1e-8;
/// Residual tolerance for identities evaluated with finite-difference jets.
pub const FD_TOL: f64 = 1e-5;

/// How Taylor coefficients of sampled quantities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DerivativeBackend {
    Analytic,
    /// Centered differences with base step h, Richardson-extrapolated over
    /// h and h/2. Partials of total order k use the step h^{min(1, 2/k)} so
    /// that rounding error stays near ε/h² at every order.
    FiniteDifference { h: f64 },
}

impl DerivativeBackend {
    pub fn tolerance(&self) -> f64 {
        match self {
            DerivativeBackend::Analytic => ANALYTIC_TOL,
            DerivativeBackend::FiniteDifference { .. } => FD_TOL,
        }
    }
}

/// A real vector-valued quantity on the sphere that can be expanded in a chart.
pub trait ChartField {
    fn values(&self, x: &Vec3) -> Vec<f64>;
    /// Jets of order `order` in the chart coordinate around w₀.
    fn analytic_jet(&self, chart: &Chart, w0: Complex64, order: usize) -> Vec<Jet>;
}

impl ChartField for HarmonicMap {
    fn values(&self, x: &Vec3) -> Vec<f64> {
        self.value(x)
    }

    fn analytic_jet(&self, chart: &Chart, w0: Complex64, order: usize) -> Vec<Jet> {
        self.jet(chart, w0, order)
    }
}

/// Jets of a field by the chosen backend.
pub fn field_jet(field: &dyn ChartField, chart: &Chart, w0: Complex64, order: usize, backend: DerivativeBackend) -> Vec<Jet> {
    match backend {
        DerivativeBackend::Analytic => field.analytic_jet(chart, w0, order),
        DerivativeBackend::FiniteDifference { h } => fd_jet(&|w| field.values(&chart.to_sphere(w)), w0, h, order),
    }
}

// ---------------------------------------------------------------------------
// finite differences

/// Fornberg weights: `w[k][j]` approximates the k-th derivative at 0 from
/// values at `nodes[j]`.
fn fornberg(nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] *= c4 / c3;
        }
        c1 = c2;
    }
    c
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Jets of a sampled real vector function f(w) by tensor-product centered
/// differences in (u, v) = (Re w, Im w).
pub fn fd_jet(f: &dyn Fn(Complex64) -> Vec<f64>, w0: Complex64, h: f64, order: usize) -> Vec<Jet> {
    let dim = f(w0).len();
    // partial[t][k] = ∂_u^{t−k} ∂_v^k f
    let mut partial: Vec<Vec<Vec<f64>>> = Vec::with_capacity(order + 1);
    partial.push(vec![f(w0)]);
    for t in 1..=order {
        let step = h.powf((2.0 / t as f64).min(1.0));
        let q = t / 2 + 2;
        let nodes: Vec<f64> = (0..=2 * q).map(|i| i as f64 - q as f64).collect();
        let accuracy = |x: usize| if x == 0 { u32::MAX } else { 2 * ((2 * q + 1 - x) as u32).div_ceil(2) };
        let estimate = |s: f64| -> Vec<Vec<f64>> {
            let wts = fornberg(&nodes.iter().map(|x| x * s).collect::<Vec<_>>(), t);
            let mut samples = vec![vec![Vec::new(); nodes.len()]; nodes.len()];
            for (a, &xa) in nodes.iter().enumerate() {
                for (b, &xb) in nodes.iter().enumerate() {
                    samples[a][b] = f(w0 + Complex64::new(xa * s, xb * s));
                }
            }
            (0..=t)
                .map(|k| {
                    let (wu, wv) = (&wts[t - k], &wts[k]);
                    let mut acc = vec![0.0; dim];
                    for a in 0..nodes.len() {
                        if wu[a] == 0.0 {
                            continue;
                        }
                        for b in 0..nodes.len() {
                            let c = wu[a] * wv[b];
                            if c != 0.0 {
                                for (o, v) in acc.iter_mut().zip(&samples[a][b]) {
                                    *o += c * v;
                                }
                            }
                        }
                    }
                    acc
                })
                .collect()
        };
        let coarse = estimate(step);
        let fine = estimate(step / 2.0);
        let row = (0..=t)
            .map(|k| {
                let p = accuracy(t - k).min(accuracy(k)).min(60) as i32;
                let factor = 1.0 / (2f64.powi(p) - 1.0);
                fine[k].iter().zip(&coarse[k]).map(|(fv, cv)| fv + (fv - cv) * factor).collect()
            })
            .collect();
        partial.push(row);
    }
    let i = Complex64::new(0.0, 1.0);
    (0..dim)
        .map(|comp| {
            Jet::from_coefficients(order, |a, b| {
                let mut acc = Complex64::new(0.0, 0.0);
                for s in 0..=a {
                    for t in 0..=b {
                        let k = s + t;
                        let coeff = binomial(a, s) * binomial(b, t);
                        acc += (-i).powu(s as u32) * i.powu(t as u32) * coeff * partial[a + b][k][comp];
                    }
                }
                acc / (2f64.powi((a + b) as i32) * factorial(a) * factorial(b))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// the sequence

fn to_scalar(v: Complex64) -> f64 {
    v.re
}

fn vec_norm(u: &[Jet]) -> f64 {
    u.iter().map(|j| j.value().norm_sqr()).sum::<f64>().sqrt()
}

/// f_{p+1} = ∂f_p − (∂ ln|f_p|²) f_p.
fn next_positive(f: &[Jet]) -> Vec<Jet> {
    let dlog = norm_sqr(f).ln().dz();
    sub_vec(&dz_vec(f), &scale_vec(f, &dlog))
}

/// f_{p−1} = −∂̄f_p / γ_{p−1} with γ_{p−1} = |∂̄f_p|²/|f_p|²; returns (f_{p−1}, γ_{p−1}).
fn next_negative(f: &[Jet]) -> (Vec<Jet>, Jet) {
    let g = dzb_vec(f);
    let gamma = norm_sqr(&g).div(&norm_sqr(f));
    let minus_inv = gamma.recip().scale_re(-1.0);
    (scale_vec(&g, &minus_inv), gamma)
}

/// Sections f_0..f_m at one sample point, plus the termination ratio
/// |f_{m+1}|/|f_m|.
pub fn positive_sections(f0: &[Jet], max_p: usize, tol: f64) -> Result<(Vec<Vec<Jet>>, f64)> {
    let mut out = vec![f0.to_vec()];
    let scale = vec_norm(f0);
    loop {
        let p = out.len() - 1;
        let f = &out[p];
        let nf = vec_norm(f);
        if nf < 1e-12 * scale {
            return Err(Error::Numerical(format!("section f_{p} vanishes: sample sits on a higher singularity")));
        }
        let next = next_positive(f);
        let ratio = vec_norm(&next) / nf;
        let reference = if p == 0 { 1.0 } else { (vec_norm(&out[1]) / scale).max(1.0) };
        if ratio < tol * reference || p == max_p {
            return Ok((out, ratio));
        }
        out.push(next);
    }
}

/// Harmonic sequence sampled on a chart grid.
#[derive(Debug, Clone)]
pub struct HarmonicSequence {
    pub map: String,
    pub grid: ChartGrid,
    pub backend: DerivativeBackend,
    /// Index m at which f_{m+1} ≡ 0.
    pub termination: usize,
    /// Largest |f_{m+1}|/|f_m| over the samples.
    pub termination_ratio: f64,
    pub points: Vec<SequencePoint>,
}

/// Sections at one sample.
#[derive(Debug, Clone)]
pub struct SequencePoint {
    pub w: Complex64,
    /// f_0, f_1, …, f_m.
    pub positive: Vec<Vec<Jet>>,
    /// f_0, f_{−1}, …, f_{−m}.
    pub negative: Vec<Vec<Jet>>,
}

impl SequencePoint {
    pub fn f(&self, p: isize) -> &[Jet] {
        if p >= 0 {
            &self.positive[p as usize]
        } else {
            &self.negative[(-p) as usize]
        }
    }

    fn m(&self) -> isize {
        self.positive.len() as isize - 1
    }

    /// γ_p = |f_{p+1}|²/|f_p|², zero outside −m ≤ p ≤ m − 1.
    pub fn gamma(&self, p: isize) -> Jet {
        let m = self.m();
        if p >= m || p < -m {
            let order = self.f(p.clamp(-m, m)).iter().map(Jet::order).min().unwrap_or(0);
            return Jet::zero(order);
        }
        norm_sqr(self.f(p + 1)).div(&norm_sqr(self.f(p)))
    }
}

fn sequence_order(m: usize, backend: DerivativeBackend) -> usize {
    match backend {
        DerivativeBackend::Analytic => 2 * m + 6,
        DerivativeBackend::FiniteDifference { .. } => m + 3,
    }
}

/// Build f_p, −m ≤ p ≤ m, at every sample of a chart grid.
pub fn build_sequence(map: &HarmonicMap, grid: &ChartGrid, backend: DerivativeBackend) -> Result<HarmonicSequence> {
    let m_guess = map.m();
    let order = sequence_order(m_guess, backend);
    let term_tol = match backend {
        DerivativeBackend::Analytic => 1e-7,
        DerivativeBackend::FiniteDifference { .. } => 1e-3,
    };
    let max_p = map.ambient_dim();
    let mut points = Vec::with_capacity(grid.points.len());
    let mut termination = None;
    let mut worst_ratio = 0.0f64;
    for (i, &w) in grid.points.iter().enumerate() {
        let f0 = field_jet(map, &grid.chart, w, order, backend);
        let (positive, ratio) = positive_sections(&f0, max_p.min(order - 1), term_tol)
            .map_err(|e| Error::Numerical(format!("sample {i} (w = {w}): {e}")))?;
        let m = positive.len() - 1;
        match termination {
            None => termination = Some(m),
            Some(t) if t != m => {
                return Err(Error::Numerical(format!(
                    "sample {i} (w = {w}) terminates at p = {m}, others at p = {t}: chart meets a higher singularity"
                )))
            }
            _ => {}
        }
        worst_ratio = worst_ratio.max(ratio);
        let mut negative = vec![f0];
        for _ in 0..m {
            let (next, _) = next_negative(negative.last().expect("nonempty"));
            negative.push(next);
        }
        points.push(SequencePoint { w, positive, negative });
    }
    Ok(HarmonicSequence {
        map: map.descriptor(),
        grid: grid.clone(),
        backend,
        termination: termination.unwrap_or(0),
        termination_ratio: worst_ratio,
        points,
    })
}

/// One row of the residual table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub identity: String,
    pub chart_center: [f64; 3],
    pub max_residual: f64,
    pub converged: bool,
}

fn rel(num: f64, den: f64) -> f64 {
    num / den.max(1e-300)
}

fn vec_value_norm(u: &[Jet]) -> f64 {
    vec_norm(u)
}

fn vec_value_diff(u: &[Jet], v: &[Jet]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a.value() - b.value()).norm_sqr()).sum::<f64>().sqrt()
}

/// Max residuals of the sequence identities over the chart samples:
/// the ∂̄ and ∂ recursions, the log-norm and Toda identities for γ_p,
/// Hermitian orthogonality of distinct f_p, and bilinear isotropy of
/// f_p, f_q for p, q ≥ 1.
pub fn verify_identities(seq: &HarmonicSequence) -> Vec<IdentityResidual> {
    let tol = seq.backend.tolerance();
    let m = seq.termination as isize;
    let mut worst = [0.0f64; 6];
    for pt in &seq.points {
        // ∂̄f_p = −γ_{p−1} f_{p−1}, p = 1..m
        for p in 1..=m {
            let lhs = dzb_vec(pt.f(p));
            let g = pt.gamma(p - 1);
            let rhs: Vec<Jet> = pt.f(p - 1).iter().map(|c| (c * &g).scale_re(-1.0)).collect();
            worst[0] = worst[0].max(rel(vec_value_diff(&lhs, &rhs), vec_value_norm(&rhs)));
        }
        // ∂f_{−p} = f_{−p+1} + (∂ ln|f_{−p}|²) f_{−p}, p = 1..m
        for p in 1..=m {
            let f = pt.f(-p);
            let lhs = dz_vec(f);
            let dlog = norm_sqr(f).ln().dz();
            let t2 = scale_vec(f, &dlog);
            let rhs: Vec<Jet> = pt.f(-p + 1).iter().zip(&t2).map(|(a, b)| a + b).collect();
            worst[1] = worst[1].max(rel(vec_value_diff(&lhs, &rhs), vec_value_norm(pt.f(-p + 1)) + vec_value_norm(&t2)));
        }
        // ∂∂̄ ln|f_p|² = γ_p − γ_{p−1}
        for p in -m..=m {
            let lhs = norm_sqr(pt.f(p)).ln().dz().dzb().value();
            let (a, b) = (pt.gamma(p).value(), pt.gamma(p - 1).value());
            worst[2] = worst[2].max(rel((lhs - (a - b)).norm(), a.norm() + b.norm()));
        }
        // ∂∂̄ ln γ_p = γ_{p+1} − 2γ_p + γ_{p−1}
        for p in -m..m {
            let lhs = pt.gamma(p).ln().dz().dzb().value();
            let (a, b, c) = (pt.gamma(p + 1).value(), pt.gamma(p).value(), pt.gamma(p - 1).value());
            worst[3] = worst[3].max(rel((lhs - (a - 2.0 * b + c)).norm(), a.norm() + 2.0 * b.norm() + c.norm()));
        }
        for p in -m..=m {
            for q in -m..=m {
                let scale = vec_value_norm(pt.f(p)) * vec_value_norm(pt.f(q));
                if p != q {
                    let h = hermitian(pt.f(p), pt.f(q)).value().norm();
                    worst[4] = worst[4].max(rel(h, scale));
                }
                if p >= 1 && q >= 1 {
                    let b = bilinear(pt.f(p), pt.f(q)).value().norm();
                    worst[5] = worst[5].max(rel(b, scale));
                }
            }
        }
    }
    let names = ["dbar_relation", "dz_relation", "log_norm_identity", "toda_identity", "orthogonality", "isotropy"];
    let c = seq.grid.center();
    let mut rows: Vec<IdentityResidual> = names
        .iter()
        .zip(worst)
        .map(|(n, r)| IdentityResidual { identity: n.to_string(), chart_center: [c.x, c.y, c.z], max_residual: r, converged: r < tol })
        .collect();
    rows.push(IdentityResidual {
        identity: "termination".into(),
        chart_center: [c.x, c.y, c.z],
        max_residual: seq.termination_ratio,
        converged: seq.termination_ratio < tol.max(1e-7) * 100.0,
    });
    rows
}

/// Residual table as CSV with header "identity,chart_center,max_residual,converged".
pub fn residuals_to_csv(rows: &[IdentityResidual]) -> String {
    let mut out = String::from("identity,chart_center,max_residual,converged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6} {:.6} {:.6},{:.6e},{}",
            r.identity, r.chart_center[0], r.chart_center[1], r.chart_center[2], r.max_residual, r.converged
        );
    }
    out
}

/// Chart centres on a coarse probe that keep the sequence densities γ_p
/// well away from zero, greedily chosen at least 0.5 rad apart.
pub fn choose_chart_centers(map: &HarmonicMap, count: usize) -> Result<Vec<Vec3>> {
    let probe = icosphere(2)?;
    let m = map.m();
    let mut scored: Vec<(f64, usize)> = Vec::new();
    for (i, x) in probe.vertices.iter().enumerate() {
        let chart = Chart::new(*x);
        let f0 = map.jet(&chart, Complex64::new(0.0, 0.0), m + 2);
        let score = match positive_sections(&f0, m, 1e-7) {
            Ok((secs, _)) if secs.len() == m + 1 => (0..m)
                .map(|p| {
                    let (a, b) = (vec_norm(&secs[p + 1]), vec_norm(&secs[p]));
                    (a / b).powi(2)
                })
                .fold(f64::INFINITY, f64::min),
            _ => 0.0,
        };
        scored.push((score, i));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<Vec3> = Vec::new();
    for (_, i) in scored {
        let x = probe.vertices[i];
        if out.iter().all(|y| x.dot(y).clamp(-1.0, 1.0).acos() > 0.5) {
            out.push(x);
        }
        if out.len() == count {
            break;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// conjugate fields

/// V₊ and V* = 2 Im V₊ of a real field V ⊥ Φ at sample points.
#[derive(Debug, Clone)]
pub struct ConjugateDecomposition {
    pub v_plus: Vec<Vec<Complex64>>,
    pub v_star: Vec<Vec<f64>>,
    /// max |V − 2 Re V₊| / |V|: how completely L_{>0} ⊕ L_{<0} captures V.
    pub reconstruction_error: f64,
}

/// Hermitian projection of V onto span{f₁..f_m} (f_p mutually orthogonal).
fn project_positive(v: &[Jet], sections: &[Vec<Jet>]) -> Vec<Jet> {
    let order = v.iter().map(Jet::order).min().unwrap_or(0);
    let mut out = vec![Jet::zero(order); v.len()];
    for f in &sections[1..] {
        let coeff = hermitian(v, f).div(&norm_sqr(f));
        for (o, c) in out.iter_mut().zip(f) {
            *o = &*o + &(&coeff * c);
        }
    }
    out
}

fn sections_at(map: &HarmonicMap, chart: &Chart, order: usize) -> Result<Vec<Vec<Jet>>> {
    let m = map.m();
    let f0 = map.jet(chart, Complex64::new(0.0, 0.0), order + m + 1);
    let (secs, _) = positive_sections(&f0, m, 1e-7)?;
    if secs.len() != m + 1 {
        return Err(Error::Numerical(format!(
            "positive sequence spans {} sections instead of {m}: degenerate span at {:?}",
            secs.len() - 1,
            chart.center
        )));
    }
    Ok(secs)
}

/// Conjugate of a field given by values at points (chart centred at each point).
pub fn conjugate_field(map: &HarmonicMap, points: &[Vec3], field: &[Vec<f64>]) -> Result<ConjugateDecomposition> {
    if points.len() != field.len() {
        return Err(Error::Validation("field and point counts differ".into()));
    }
    let mut v_plus = Vec::with_capacity(points.len());
    let mut v_star = Vec::with_capacity(points.len());
    let mut err = 0.0f64;
    for (x, v) in points.iter().zip(field) {
        let chart = Chart::new(*x);
        let secs = sections_at(map, &chart, 0)?;
        let vj: Vec<Jet> = v.iter().map(|&c| Jet::real(0, c)).collect();
        let vp: Vec<Complex64> = project_positive(&vj, &secs).iter().map(|j| j.value()).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let back = vp.iter().zip(v).map(|(p, c)| (2.0 * p.re - c).powi(2)).sum::<f64>().sqrt();
        err = err.max(rel(back, norm));
        v_star.push(vp.iter().map(|p| 2.0 * p.im).collect());
        v_plus.push(vp);
    }
    Ok(ConjugateDecomposition { v_plus, v_star, reconstruction_error: err })
}

/// The conjugate V* of a field, as a field in its own right.
pub struct ConjugateField<'a> {
    pub map: &'a HarmonicMap,
    pub field: &'a dyn ChartField,
}

impl ChartField for ConjugateField<'_> {
    fn values(&self, x: &Vec3) -> Vec<f64> {
        let chart = Chart::new(*x);
        self.analytic_jet(&chart, Complex64::new(0.0, 0.0), 0).iter().map(|j| to_scalar(j.value())).collect()
    }

    fn analytic_jet(&self, chart: &Chart, w0: Complex64, order: usize) -> Vec<Jet> {
        let m = self.map.m();
        let f0 = self.map.jet(chart, w0, order + m + 1);
        let secs = positive_sections(&f0, m, 1e-7).map(|x| x.0).unwrap_or_else(|_| vec![f0.clone()]);
        let v = self.field.analytic_jet(chart, w0, order);
        project_positive(&v, &secs).iter().map(|j| j.im().scale_re(2.0)).collect()
    }
}

/// Smooth field V = π_{Φ⊥} P(x) for a polynomial vector P.
pub struct TangentPolynomialField<'a> {
    pub map: &'a HarmonicMap,
    pub components: Vec<Poly3>,
}

impl<'a> TangentPolynomialField<'a> {
    /// Random components of degree ≤ 2 with standard-normal coefficients.
    pub fn random(map: &'a HarmonicMap, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exps: Vec<[u32; 3]> = (0..=2u32)
            .flat_map(|a| (0..=2 - a).flat_map(move |b| (0..=2 - a - b).map(move |c| [a, b, c])))
            .collect();
        let components = (0..map.ambient_dim())
            .map(|_| {
                exps.iter().fold(Poly3::default(), |acc, &e| {
                    let c: f64 = rng.sample(rand_distr::StandardNormal);
                    acc.add(&Poly3::monomial(e, c))
                })
            })
            .collect();
        TangentPolynomialField { map, components }
    }
}

impl ChartField for TangentPolynomialField<'_> {
    fn values(&self, x: &Vec3) -> Vec<f64> {
        let phi = self.map.value(x);
        let p: Vec<f64> = self.components.iter().map(|c| c.eval(x)).collect();
        let dot: f64 = p.iter().zip(&phi).map(|(a, b)| a * b).sum();
        p.iter().zip(&phi).map(|(a, b)| a - dot * b).collect()
    }

    fn analytic_jet(&self, chart: &Chart, w0: Complex64, order: usize) -> Vec<Jet> {
        let x = chart_point_jets(chart, w0, order);
        let phi = self.map.jet(chart, w0, order);
        let p: Vec<Jet> = self.components.iter().map(|c| c.jet(&x)).collect();
        let dot = bilinear(&p, &phi);
        sub_vec(&p, &scale_vec(&phi, &dot))
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

/// Q_E(V) = ∫ Σᵢ|∇Vⁱ|² − |∇Φ|²|V|² over the round sphere by Gauss–Legendre ×
/// uniform quadrature; returns (Q_E, ∫|∇V|² + ∫|∇Φ|²|V|²) so callers can form
/// a relative error.
pub fn quadratic_form_quadrature(map: &HarmonicMap, field: &dyn ChartField, n_theta: usize) -> (f64, f64) {
    let (nodes, weights) = gauss_legendre(n_theta);
    let n_phi = 2 * n_theta;
    let dphi = 2.0 * PI / n_phi as f64;
    let zero = Complex64::new(0.0, 0.0);
    let mut q = 0.0;
    let mut scale = 0.0;
    for (t, wt) in nodes.iter().zip(&weights) {
        let s = (1.0 - t * t).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let x = Vec3::new(s * phi.cos(), s * phi.sin(), *t);
            let chart = Chart::new(x);
            // at the chart centre the round metric is 4|dw|², so the round
            // gradient norm of a real function is |∂_w f|·2/2 = |∂_w f|
            let v = field.analytic_jet(&chart, zero, 1);
            let f = map.jet(&chart, zero, 1);
            let grad_v: f64 = v.iter().map(|c| c.dz().value().norm_sqr()).sum();
            let grad_phi: f64 = f.iter().map(|c| c.dz().value().norm_sqr()).sum();
            let v2: f64 = v.iter().map(|c| c.value().norm_sqr()).sum();
            let area = wt * dphi;
            q += area * (grad_v - grad_phi * v2);
            scale += area * (grad_v + grad_phi * v2);
        }
    }
    (q, scale)
}

// ---------------------------------------------------------------------------
// Jacobi fields from Möbius transformations

/// The conformal vector field y ↦ ω × y + b − (b·y) y on the target S².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusGenerator {
    pub omega: [f64; 3],
    pub b: [f64; 3],
}

fn stereo_inverse_derivative(w: Complex64, dw: Complex64) -> Vec3 {
    let s = 1.0 + w.norm_sqr();
    let d_abs = 2.0 * (w.conj() * dw).re;
    let dc = dw * (2.0 / s) - w * (2.0 * d_abs / (s * s));
    Vec3::new(dc.re, dc.im, 2.0 * d_abs / (s * s))
}

fn stereo_inverse(w: Complex64) -> Vec3 {
    let s = 1.0 + w.norm_sqr();
    Vec3::new(2.0 * w.re / s, 2.0 * w.im / s, (w.norm_sqr() - 1.0) / s)
}

impl MobiusGenerator {
    /// Generator of t ↦ exp(tX) acting on the target by z ↦ (az + b)/(cz + d),
    /// X = [[a, b], [c, d]] traceless; normalised so |(ω, b)| = 1.
    pub fn from_matrix(x: [[Complex64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = x;
        if (a + d).norm() > 1e-12 {
            return Err(Error::Validation("Möbius generator must be traceless".into()));
        }
        let dw = |w: Complex64| b + (a - d) * w - c * w * w;
        let samples = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.5, -0.3),
        ];
        let mut m = DMatrix::zeros(12, 6);
        let mut rhs = DVector::zeros(12);
        for (k, &w) in samples.iter().enumerate() {
            let y = stereo_inverse(w);
            let target = stereo_inverse_derivative(w, dw(w));
            // columns: ω (cross product), then b − (b·y)y
            for col in 0..3 {
                let mut e = Vec3::zeros();
                e[col] = 1.0;
                let rot = e.cross(&y);
                let grad = e - y * e.dot(&y);
                for r in 0..3 {
                    m[(3 * k + r, col)] = rot[r];
                    m[(3 * k + r, 3 + col)] = grad[r];
                }
            }
            for r in 0..3 {
                rhs[3 * k + r] = target[r];
            }
        }
        let sol = m.clone().svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Numerical(e.to_string()))?;
        let fit = (&m * &sol - &rhs).amax();
        if fit > 1e-10 * rhs.amax().max(1.0) {
            return Err(Error::Numerical(format!("Möbius field fit residual {fit:e}")));
        }
        let norm = sol.norm();
        let sol = if norm > 0.0 { sol / norm } else { sol };
        Ok(MobiusGenerator { omega: [sol[0], sol[1], sol[2]], b: [sol[3], sol[4], sol[5]] })
    }

    /// Rotation z ↦ e^{it}z of the target.
    pub fn rotation() -> Self {
        Self::from_matrix([[Complex64::new(0.0, 0.5), Complex64::default()], [Complex64::default(), Complex64::new(0.0, -0.5)]])
            .expect("valid generator")
    }

    /// Dilation z ↦ eᵗz of the target.
    pub fn dilation() -> Self {
        Self::from_matrix([[Complex64::new(0.5, 0.0), Complex64::default()], [Complex64::default(), Complex64::new(-0.5, 0.0)]])
            .expect("valid generator")
    }

    pub fn is_rotation(&self) -> bool {
        self.b.iter().all(|v| v.abs() < 1e-12)
    }
}

/// V = d/dt (Möbius_t ∘ Φ) at t = 0, a Jacobi field along a map into S².
pub struct MobiusJacobiField<'a> {
    pub map: &'a HarmonicMap,
    pub generator: MobiusGenerator,
}

/// The Jacobi field of a Möbius deformation of a map into S².
pub fn integrable_jacobi<'a>(map: &'a HarmonicMap, generator: MobiusGenerator) -> Result<MobiusJacobiField<'a>> {
    if map.ambient_dim() != 3 {
        return Err(Error::Validation("Möbius deformations act on maps into S²".into()));
    }
    Ok(MobiusJacobiField { map, generator })
}

impl ChartField for MobiusJacobiField<'_> {
    fn values(&self, x: &Vec3) -> Vec<f64> {
        let y = Vec3::from_iterator(self.map.value(x));
        let (om, b) = (Vec3::from(self.generator.omega), Vec3::from(self.generator.b));
        let v = om.cross(&y) + b - y * b.dot(&y);
        v.iter().copied().collect()
    }

    fn analytic_jet(&self, chart: &Chart, w0: Complex64, order: usize) -> Vec<Jet> {
        let y = self.map.jet(chart, w0, order);
        let (om, b) = (self.generator.omega, self.generator.b);
        let by = (0..3).fold(Jet::zero(order), |acc, i| &acc + &y[i].scale_re(b[i]));
        (0..3)
            .map(|i| {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                let cross = &y[k].scale_re(om[j]) - &y[j].scale_re(om[k]);
                &(&cross + &Jet::real(order, b[i])) - &(&by * &y[i])
            })
            .collect()
    }
}

/// γ̂ values and identity residuals of the chain built from a field V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaHatChain {
    /// γ̂₀, γ̂₋₁, …, γ̂₋ₘ at the sample.
    pub gammahat: Vec<f64>,
    /// Relative residual of π_{Φ⊥}(∂∂̄V + γ₋₁V) = 0 (the Jacobi equation in the chart).
    pub jacobi_residual: f64,
    /// Relative residual of the ∂V₋ₚ recursion, p = 1..m.
    pub dzv_residuals: Vec<f64>,
}

impl GammaHatChain {
    pub fn max_dzv_residual(&self) -> f64 {
        self.dzv_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Build γ̂ and V₋ₚ at w₀ from the Jacobi candidate V and check
/// ∂V₋ₚ = V₋ₚ₊₁ + (∂ ln|f₋ₚ|²)V₋ₚ − ∂(Σ_{i=−p}^{−1} γ̂ᵢ/γᵢ) f₋ₚ.
pub fn gammahat_chain(
    map: &HarmonicMap,
    field: &dyn ChartField,
    chart: &Chart,
    w0: Complex64,
    backend: DerivativeBackend,
) -> Result<GammaHatChain> {
    let m = map.m();
    let order = 2 * m + 2;
    let f0 = field_jet(map, chart, w0, order, backend);
    let v0 = field_jet(field, chart, w0, order, backend);
    // f₀, f₋₁, …, f₋ₘ and γ₋₁, …, γ₋ₘ
    let mut fneg = vec![f0.clone()];
    let mut gneg = vec![Jet::zero(order)];
    for _ in 0..m {
        let (f, g) = next_negative(fneg.last().expect("nonempty"));
        if g.value().norm() < 1e-14 {
            return Err(Error::Numerical("chart centre sits on a singular point of the sequence".into()));
        }
        fneg.push(f);
        gneg.push(g);
    }
    let ddv = dzb_vec(&dz_vec(&v0));
    let gh0 = bilinear(&ddv, &f0).scale_re(-1.0);
    // Jacobi equation: tangential part of ∂∂̄V + γ₋₁V vanishes
    let jac: Vec<Jet> = ddv.iter().zip(&v0).map(|(a, b)| a + &(&gneg[1] * b)).collect();
    let normal = bilinear(&jac, &f0);
    let tangential: Vec<Jet> = jac.iter().zip(&f0).map(|(a, f)| a - &(&normal * f)).collect();
    let jacobi_residual = rel(vec_value_norm(&tangential), vec_value_norm(&ddv) + vec_value_norm(&scale_vec(&v0, &gneg[1])));

    // γ̂₀, γ̂₋₁ = γ̂₀, γ̂₋ₚ₋₁ = ∂∂̄(γ̂₋ₚ/γ₋ₚ) + 2γ̂₋ₚ − γ̂₋ₚ₊₁
    let mut gh = vec![gh0.clone(), gh0];
    let mut vneg = vec![v0];
    for p in 0..m {
        // V₋ₚ₋₁ = −(∂̄V₋ₚ + γ̂₋ₚ₋₁ f₋ₚ₋₁)/γ₋ₚ₋₁
        let dbar = dzb_vec(&vneg[p]);
        let inv = gneg[p + 1].recip().scale_re(-1.0);
        let next: Vec<Jet> = dbar.iter().zip(&fneg[p + 1]).map(|(a, f)| &(a + &(&gh[p + 1] * f)) * &inv).collect();
        vneg.push(next);
        if p + 1 < m {
            let q = p + 1;
            let ratio = gh[q].div(&gneg[q]);
            let g = &(&ratio.dz().dzb() + &gh[q].scale_re(2.0)) - &gh[q - 1];
            gh.push(g);
        }
    }
    let mut dzv_residuals = Vec::with_capacity(m);
    let mut sum = Jet::zero(order);
    for p in 1..=m {
        sum = &sum + &gh[p].div(&gneg[p]);
        let lhs = dz_vec(&vneg[p]);
        let dlog = norm_sqr(&fneg[p]).ln().dz();
        let t2 = scale_vec(&vneg[p], &dlog);
        let t3 = scale_vec(&fneg[p], &sum.dz());
        let rhs: Vec<Jet> = vneg[p - 1].iter().zip(&t2).zip(&t3).map(|((a, b), c)| &(a + b) - c).collect();
        let scale = vec_value_norm(&vneg[p - 1]) + vec_value_norm(&t2) + vec_value_norm(&t3);
        dzv_residuals.push(rel(vec_value_diff(&lhs, &rhs), scale));
    }
    Ok(GammaHatChain {
        gammahat: gh.iter().take(m + 1).map(|g| g.value().re).collect(),
        jacobi_residual,
        dzv_residuals,
    })
}

/// ∂V recursion residual under step refinement of the finite-difference
/// backend; `converged` means the residual falls by at least half per
/// halving of h and ends below 1e−4 (or sits at rounding level throughout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

pub fn dzv_refinement(map: &HarmonicMap, field: &dyn ChartField, chart: &Chart, steps: &[f64]) -> Result<RefinementStudy> {
    let mut residuals = Vec::with_capacity(steps.len());
    for &h in steps {
        let c = gammahat_chain(map, field, chart, Complex64::new(0.0, 0.0), DerivativeBackend::FiniteDifference { h })?;
        residuals.push(c.max_dzv_residual().max(c.jacobi_residual));
    }
    let floor = 1e-8;
    let decreasing = residuals.windows(2).all(|w| w[1] <= 0.5 * w[0] || w[1] < floor);
    let converged = residuals.last().map_or(false, |&r| r < 1e-4) && decreasing;
    Ok(RefinementStudy { steps: steps.to_vec(), residuals, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{parse_descriptor, veronese};
    use crate::mesh::chart_grid;

    #[test]
    fn fornberg_central_weights() {
        let w = fornberg(&[-1.0, 0.0, 1.0], 2);
        assert!((w[1][0] + 0.5).abs() < 1e-15 && (w[1][2] - 0.5).abs() < 1e-15);
        assert!((w[2][0] - 1.0).abs() < 1e-15 && (w[2][1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn fd_jet_matches_analytic_jet() {
        let map = HarmonicMap::Polynomial(veronese(2).unwrap());
        let chart = Chart::new(Vec3::new(0.3, -0.4, 0.866).normalize());
        let w0 = Complex64::new(0.1, 0.05);
        let a = map.jet(&chart, w0, 3);
        let f = fd_jet(&|w| map.value(&chart.to_sphere(w)), w0, 1e-3, 3);
        for (x, y) in a.iter().zip(&f) {
            for s in 0..=3 {
                for b in 0..=s {
                    let d = (x.coeff(s - b, b) - y.coeff(s - b, b)).norm();
                    assert!(d < 1e-7, "coefficient ({},{}) differs by {d}", s - b, b);
                }
            }
        }
    }

    #[test]
    fn veronese_sequences_terminate_at_m() {
        for m in 1..=2 {
            let map = HarmonicMap::Polynomial(veronese(m).unwrap());
            let grid = chart_grid(Vec3::new(0.0, 0.6, 0.8), 0.2, 3).unwrap();
            let seq = build_sequence(&map, &grid, DerivativeBackend::Analytic).unwrap();
            assert_eq!(seq.termination, m);
            for row in verify_identities(&seq) {
                assert!(row.converged, "{} residual {}", row.identity, row.max_residual);
            }
        }
    }

    #[test]
    fn gamma_zero_matches_finite_differences() {
        let map = HarmonicMap::Polynomial(veronese(2).unwrap());
        let grid = chart_grid(Vec3::new(0.0, 0.0, 1.0), 0.2, 3).unwrap();
        let seq = build_sequence(&map, &grid, DerivativeBackend::Analytic).unwrap();
        let c = grid.center_index();
        let g0 = seq.points[c].gamma(0).value().re;
        // (Φ_z, Φ_z̄) = ¼(|Φ_u|² + |Φ_v|²) by central differences
        let h = 1e-5;
        let at = |w: Complex64| map.value(&grid.chart.to_sphere(w));
        let du: Vec<f64> = at(Complex64::new(h, 0.0)).iter().zip(at(Complex64::new(-h, 0.0))).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let dv: Vec<f64> = at(Complex64::new(0.0, h)).iter().zip(at(Complex64::new(0.0, -h))).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let fd = 0.25 * du.iter().chain(&dv).map(|x| x * x).sum::<f64>();
        assert!((g0 - fd).abs() / fd < 1e-6);
    }

    #[test]
    fn perturbed_section_breaks_dbar_relation() {
        let map = HarmonicMap::Polynomial(veronese(2).unwrap());
        let grid = chart_grid(Vec3::new(0.0, 0.6, 0.8), 0.2, 3).unwrap();
        let mut seq = build_sequence(&map, &grid, DerivativeBackend::Analytic).unwrap();
        for pt in &mut seq.points {
            let w = Jet::z(pt.positive[1][0].order(), pt.w);
            pt.positive[1][0] = &pt.positive[1][0] + &w.conj().scale_re(0.5);
        }
        let rows = verify_identities(&seq);
        let dbar = rows.iter().find(|r| r.identity == "dbar_relation").unwrap();
        assert!(dbar.max_residual > 1e-2);
    }

    #[test]
    fn rational_identities_with_finite_differences() {
        let map = parse_descriptor("rational:z^2").unwrap();
        let grid = chart_grid(Vec3::new(1.0, 0.0, 0.0), 0.2, 3).unwrap();
        let seq = build_sequence(&map, &grid, DerivativeBackend::FiniteDifference { h: 1e-3 }).unwrap();
        assert_eq!(seq.termination, 1);
        for row in verify_identities(&seq) {
            assert!(row.max_residual < 1e-5, "{} residual {}", row.identity, row.max_residual);
        }
    }

    #[test]
    fn conjugation_is_an_anti_involution() {
        for m in 1..=2 {
            let map = HarmonicMap::Polynomial(veronese(m).unwrap());
            let v = TangentPolynomialField::random(&map, 3);
            let points: Vec<Vec3> = icosphere(1).unwrap().vertices;
            let vals: Vec<Vec<f64>> = points.iter().map(|x| v.values(x)).collect();
            let c1 = conjugate_field(&map, &points, &vals).unwrap();
            assert!(c1.reconstruction_error < 1e-12);
            let c2 = conjugate_field(&map, &points, &c1.v_star).unwrap();
            for (a, b) in c2.v_star.iter().zip(&vals) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x + y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mobius_generators() {
        let r = MobiusGenerator::rotation();
        assert!(r.is_rotation());
        assert!((r.omega[2].abs() - 1.0).abs() < 1e-12);
        let d = MobiusGenerator::dilation();
        assert!(!d.is_rotation());
        let z = Complex64::default();
        assert!(MobiusGenerator::from_matrix([[Complex64::new(1.0, 0.0), z], [z, Complex64::new(1.0, 0.0)]]).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }
}
