//! Harmonic maps into round spheres: Veronese-type polynomial maps built
//! from spherical harmonics, holomorphic (rational) maps S² → S², and
//! zero-padded embeddings into larger spheres.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fem::{vertex_areas, Density};
use crate::jet::Jet;
use crate::mesh::{Chart, SphereMesh, Vec3};

/// Largest supported Veronese degree.
pub const MAX_VERONESE: usize = 4;

// ---------------------------------------------------------------------------
// polynomials in three real variables

/// Real polynomial in (x, y, z).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly3 {
    terms: Vec<([u32; 3], f64)>,
}

impl Poly3 {
    fn from_map(map: BTreeMap<[u32; 3], f64>) -> Self {
        Poly3 { terms: map.into_iter().filter(|(_, c)| *c != 0.0).collect() }
    }

    fn to_map(&self) -> BTreeMap<[u32; 3], f64> {
        self.terms.iter().copied().collect()
    }

    pub fn monomial(e: [u32; 3], c: f64) -> Self {
        Self::from_map(BTreeMap::from([(e, c)]))
    }

    pub fn coordinate(axis: usize) -> Self {
        let mut e = [0; 3];
        e[axis] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial([0, 0, 0], c)
    }

    pub fn terms(&self) -> &[([u32; 3], f64)] {
        &self.terms
    }

    pub fn add(&self, other: &Poly3) -> Poly3 {
        let mut m = self.to_map();
        for &(e, c) in &other.terms {
            *m.entry(e).or_insert(0.0) += c;
        }
        Self::from_map(m)
    }

    pub fn scale(&self, k: f64) -> Poly3 {
        Poly3 { terms: self.terms.iter().map(|&(e, c)| (e, c * k)).filter(|(_, c)| *c != 0.0).collect() }
    }

    pub fn mul(&self, other: &Poly3) -> Poly3 {
        let mut m = BTreeMap::new();
        for &(e1, c1) in &self.terms {
            for &(e2, c2) in &other.terms {
                *m.entry([e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]]).or_insert(0.0) += c1 * c2;
            }
        }
        Self::from_map(m)
    }

    pub fn pow(&self, k: u32) -> Poly3 {
        (0..k).fold(Poly3::constant(1.0), |acc, _| acc.mul(self))
    }

    /// ∂/∂x_axis.
    pub fn derivative(&self, axis: usize) -> Poly3 {
        let mut m = BTreeMap::new();
        for &(e, c) in &self.terms {
            if e[axis] > 0 {
                let mut f = e;
                f[axis] -= 1;
                *m.entry(f).or_insert(0.0) += c * e[axis] as f64;
            }
        }
        Self::from_map(m)
    }

    /// Euclidean Laplacian in R³.
    pub fn laplacian(&self) -> Poly3 {
        (0..3).fold(Poly3::default(), |acc, a| acc.add(&self.derivative(a).derivative(a)))
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e[0] + e[1] + e[2]).max().unwrap_or(0)
    }

    /// Every monomial has even total degree, so f(−x) = f(x).
    pub fn is_even(&self) -> bool {
        self.terms.iter().all(|(e, _)| (e[0] + e[1] + e[2]) % 2 == 0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        self.terms
            .iter()
            .map(|&(e, c)| c * x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32))
            .sum()
    }

    /// Evaluate on jets of the three coordinates.
    pub fn jet(&self, x: &[Jet; 3]) -> Jet {
        let order = x[0].order();
        let deg = self.degree() as usize;
        let pw: [Vec<Jet>; 3] = std::array::from_fn(|a| {
            let mut v = vec![Jet::real(order, 1.0)];
            for k in 1..=deg {
                let next = &v[k - 1] * &x[a];
                v.push(next);
            }
            v
        });
        self.eval_jet(&pw)
    }

    /// Evaluate on jets given precomputed powers `pw[axis][k] = x_axis^k`.
    fn eval_jet(&self, pw: &[Vec<Jet>; 3]) -> Jet {
        let order = pw[0][0].order();
        let mut out = Jet::zero(order);
        for &(e, c) in &self.terms {
            let t = &(&pw[0][e[0] as usize] * &pw[1][e[1] as usize]) * &pw[2][e[2] as usize];
            out = &out + &t.scale_re(c);
        }
        out
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Real spherical harmonics of degree m as homogeneous harmonic polynomials,
/// scaled so that their squares sum to 1 on the unit sphere.
///
/// Order: (Re (x+iy)ᵏ·Πₘᵏ, Im (x+iy)ᵏ·Πₘᵏ) for k = 1..m, then the zonal one;
/// for m = 1 this is (x, y, z).
pub fn spherical_harmonic_basis(m: usize) -> Vec<Poly3> {
    let (x, y, z) = (Poly3::coordinate(0), Poly3::coordinate(1), Poly3::coordinate(2));
    let r2 = x.mul(&x).add(&y.mul(&y)).add(&z.mul(&z));
    let mm = m as u64;
    // associated Legendre part Π_m^k(z, r²)
    let legendre = |k: u64| -> Poly3 {
        let mut p = Poly3::default();
        for j in 0..=((mm - k) / 2) {
            let c = if j % 2 == 0 { 1.0 } else { -1.0 } * 2f64.powi(-(m as i32)) * binomial(mm, j) * binomial(2 * mm - 2 * j, mm)
                * factorial(mm - 2 * j)
                / factorial(mm - 2 * j - k);
            p = p.add(&r2.pow(j as u32).mul(&z.pow((mm - 2 * j - k) as u32)).scale(c));
        }
        p
    };
    // (x + i y)^k = A_k + i B_k
    let cs = |k: u64| -> (Poly3, Poly3) {
        let (mut a, mut b) = (Poly3::default(), Poly3::default());
        for p in 0..=k {
            let mono = x.pow(p as u32).mul(&y.pow((k - p) as u32)).scale(binomial(k, p));
            match (k - p) % 4 {
                0 => a = a.add(&mono),
                1 => b = b.add(&mono),
                2 => a = a.add(&mono.scale(-1.0)),
                _ => b = b.add(&mono.scale(-1.0)),
            }
        }
        (a, b)
    };
    let mut out = Vec::with_capacity(2 * m + 1);
    for k in 1..=mm {
        let norm = (2.0 * factorial(mm - k) / factorial(mm + k)).sqrt();
        let (a, b) = cs(k);
        let l = legendre(k);
        out.push(l.mul(&a).scale(norm));
        out.push(l.mul(&b).scale(norm));
    }
    out.push(legendre(0));
    out
}

// ---------------------------------------------------------------------------
// map types

/// Map whose components are polynomials restricted to the sphere.
#[derive(Debug, Clone)]
pub struct PolynomialMap {
    /// Target S^{2m} (2m + 1 components).
    pub m: usize,
    pub components: Vec<Poly3>,
    /// Factor applied to the unit-normalised harmonic basis.
    pub scale: f64,
    pub label: String,
    gradients: Vec<[Poly3; 3]>,
    hessians: Vec<[[Poly3; 3]; 3]>,
}

impl PolynomialMap {
    /// Map with arbitrary polynomial components (used for negative controls).
    pub fn from_components(label: &str, components: Vec<Poly3>) -> Result<Self> {
        if components.len() % 2 == 0 || components.is_empty() {
            return Err(Error::Validation("a map into S^{2m} needs an odd number of components".into()));
        }
        let gradients: Vec<[Poly3; 3]> =
            components.iter().map(|f| [f.derivative(0), f.derivative(1), f.derivative(2)]).collect();
        let hessians = gradients
            .iter()
            .map(|g| {
                [
                    [g[0].derivative(0), g[0].derivative(1), g[0].derivative(2)],
                    [g[1].derivative(0), g[1].derivative(1), g[1].derivative(2)],
                    [g[2].derivative(0), g[2].derivative(1), g[2].derivative(2)],
                ]
            })
            .collect();
        Ok(PolynomialMap {
            m: (components.len() - 1) / 2,
            components,
            scale: 1.0,
            label: label.to_string(),
            gradients,
            hessians,
        })
    }

    pub fn is_antipodally_even(&self) -> bool {
        self.components.iter().all(Poly3::is_even)
    }

    fn gradient(&self, j: usize, x: &Vec3) -> Vec3 {
        let g = &self.gradients[j];
        Vec3::new(g[0].eval(x), g[1].eval(x), g[2].eval(x))
    }

    fn hessian(&self, j: usize, x: &Vec3) -> Matrix3<f64> {
        let h = &self.hessians[j];
        Matrix3::from_fn(|a, b| h[a][b].eval(x))
    }

    /// Round-sphere Laplace–Beltrami of component j at a unit vector x,
    /// from the Euclidean derivatives of any extension: Δ_S f = tr H − xᵀHx − 2 x·∇f.
    pub fn sphere_laplacian(&self, j: usize, x: &Vec3) -> f64 {
        let h = self.hessian(j, x);
        h.trace() - x.dot(&(h * x)) - 2.0 * x.dot(&self.gradient(j, x))
    }

    /// Tangential gradient of component j.
    pub fn tangential_gradient(&self, j: usize, x: &Vec3) -> Vec3 {
        let g = self.gradient(j, x);
        g - x * x.dot(&g)
    }
}

/// The Veronese map Φ_m: S² → S^{2m} by the degree-m harmonics.
pub fn veronese(m: usize) -> Result<PolynomialMap> {
    if !(1..=MAX_VERONESE).contains(&m) {
        return Err(Error::Config(format!("veronese degree {m} outside 1..={MAX_VERONESE}")));
    }
    let mut map = PolynomialMap::from_components(&format!("veronese:{m}"), spherical_harmonic_basis(m))?;
    map.scale = (4.0 * PI / (2 * m + 1) as f64).sqrt();
    Ok(map)
}

/// Holomorphic map z ↦ p(z)/q(z) of the Riemann sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMap {
    /// Coefficients, constant term first.
    pub p: Vec<Complex64>,
    pub q: Vec<Complex64>,
    /// max(deg p, deg q).
    pub d: usize,
    pub label: String,
}

fn trim(mut c: Vec<Complex64>) -> Vec<Complex64> {
    while c.len() > 1 && c.last().map_or(false, |v| v.norm() == 0.0) {
        c.pop();
    }
    if c.is_empty() {
        c.push(Complex64::new(0.0, 0.0));
    }
    c
}

fn degree_of(c: &[Complex64]) -> Option<usize> {
    c.iter().rposition(|v| v.norm() != 0.0)
}

/// Resultant of the two binary forms of degree d with the given coefficients.
fn homogeneous_resultant(p: &[Complex64], q: &[Complex64], d: usize) -> Complex64 {
    let coeff = |c: &[Complex64], k: usize| c.get(k).copied().unwrap_or_default();
    let n = 2 * d;
    let mut s = DMatrix::<Complex64>::zeros(n, n);
    for r in 0..d {
        for k in 0..=d {
            s[(r, r + k)] = coeff(p, d - k);
            s[(r + d, r + k)] = coeff(q, d - k);
        }
    }
    s.determinant()
}

impl RationalMap {
    pub fn new(p: Vec<Complex64>, q: Vec<Complex64>) -> Result<Self> {
        let (p, q) = (trim(p), trim(q));
        let dp = degree_of(&p);
        let dq = degree_of(&q);
        let d = match (dp, dq) {
            (None, _) | (_, None) => {
                return Err(Error::Validation("rational map needs nonzero numerator and denominator".into()))
            }
            (Some(a), Some(b)) => a.max(b),
        };
        if d == 0 {
            return Err(Error::Validation("constant map has degree 0; need d ≥ 1".into()));
        }
        let res = homogeneous_resultant(&p, &q, d);
        let scale = p.iter().map(|c| c.norm()).fold(0.0, f64::max).powi(d as i32)
            * q.iter().map(|c| c.norm()).fold(0.0, f64::max).powi(d as i32);
        if res.norm() <= 1e-12 * scale {
            return Err(Error::Validation("numerator and denominator share a root".into()));
        }
        let label = format!("rational:{}/{}", format_poly(&p), format_poly(&q));
        Ok(RationalMap { p, q, d, label })
    }

    pub fn identity() -> Self {
        RationalMap::new(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], vec![Complex64::new(1.0, 0.0)])
            .expect("identity is a valid rational map")
    }

    /// z ↦ z^d.
    pub fn power(d: usize) -> Result<Self> {
        let mut p = vec![Complex64::new(0.0, 0.0); d + 1];
        p[d] = Complex64::new(1.0, 0.0);
        RationalMap::new(p, vec![Complex64::new(1.0, 0.0)])
    }

    /// f(z) evaluated in the standard chart (∞ for poles).
    pub fn eval_z(&self, z: Complex64) -> Complex64 {
        horner(&self.p, z) / horner(&self.q, z)
    }

    /// Homogeneous P(Z₀, Z₁) = Σ a_k Z₀ᵏ Z₁^{d−k} and its partial derivatives.
    fn homogeneous(c: &[Complex64], d: usize, z0: Complex64, z1: Complex64) -> (Complex64, Complex64, Complex64) {
        let (mut v, mut d0, mut d1) = (Complex64::default(), Complex64::default(), Complex64::default());
        for (k, &a) in c.iter().enumerate() {
            v += a * z0.powu(k as u32) * z1.powu((d - k) as u32);
            if k > 0 {
                d0 += a * (k as f64) * z0.powu(k as u32 - 1) * z1.powu((d - k) as u32);
            }
            if d > k {
                d1 += a * ((d - k) as f64) * z0.powu(k as u32) * z1.powu((d - k - 1) as u32);
            }
        }
        (v, d0, d1)
    }

    fn homogeneous_jet(c: &[Complex64], d: usize, z0: &Jet, z1: &Jet) -> Jet {
        let order = z0.order();
        let (p0, p1): (Vec<Jet>, Vec<Jet>) = ((0..=d).map(|k| z0.powi(k)).collect(), (0..=d).map(|k| z1.powi(k)).collect());
        let mut out = Jet::zero(order);
        for (k, &a) in c.iter().enumerate() {
            out = &out + &(&p0[k] * &p1[d - k]).scale(a);
        }
        out
    }

    /// Value on the unit sphere.
    pub fn eval(&self, x: &Vec3) -> Vec3 {
        let (z0, z1) = homogeneous_point(x);
        let (p, _, _) = Self::homogeneous(&self.p, self.d, z0, z1);
        let (q, _, _) = Self::homogeneous(&self.q, self.d, z0, z1);
        let w = p * q.conj();
        let s = p.norm_sqr() + q.norm_sqr();
        Vec3::new(2.0 * w.re / s, 2.0 * w.im / s, (p.norm_sqr() - q.norm_sqr()) / s)
    }

    /// ½|∇Φ|² in the round gauge: (|J|·|Z|²/(d(|P|²+|Q|²)))², J the Jacobian of (P, Q).
    pub fn energy_density(&self, x: &Vec3) -> f64 {
        let (z0, z1) = homogeneous_point(x);
        let (p, p0, p1) = Self::homogeneous(&self.p, self.d, z0, z1);
        let (q, q0, q1) = Self::homogeneous(&self.q, self.d, z0, z1);
        let j = p0 * q1 - p1 * q0;
        let zz = z0.norm_sqr() + z1.norm_sqr();
        (j.norm() * zz / (self.d as f64 * (p.norm_sqr() + q.norm_sqr()))).powi(2)
    }

    /// Möbius postcomposition z ↦ (a f + b)/(c f + d).
    pub fn mobius_postcompose(&self, a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        if (a * d - b * c).norm() < 1e-14 {
            return Err(Error::Validation("Möbius matrix is singular (ad − bc = 0)".into()));
        }
        let n = self.p.len().max(self.q.len());
        let get = |v: &[Complex64], k: usize| v.get(k).copied().unwrap_or_default();
        let np: Vec<Complex64> = (0..n).map(|k| a * get(&self.p, k) + b * get(&self.q, k)).collect();
        let nq: Vec<Complex64> = (0..n).map(|k| c * get(&self.p, k) + d * get(&self.q, k)).collect();
        RationalMap::new(np, nq)
    }

    /// Random map of degree d whose coefficients are standard complex normals,
    /// redrawn until the energy density is moderate (max ρ ≤ `max_density`
    /// on the probe points) so that a fixed mesh resolves it. The probe must
    /// be finer than the mesh: a nearly cancelling zero–pole pair makes a
    /// bubble that a coarse probe steps over.
    pub fn sample<R: Rng>(d: usize, rng: &mut R, probe: &[Vec3], max_density: f64) -> Result<Self> {
        use rand_distr::{Distribution, StandardNormal};
        for _ in 0..10_000 {
            let mut draw = || -> Vec<Complex64> {
                (0..=d)
                    .map(|_| Complex64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
                    .collect()
            };
            let (p, q) = (draw(), draw());
            if let Ok(map) = RationalMap::new(p, q) {
                if map.d == d && probe.iter().all(|x| map.energy_density(x) <= max_density) {
                    return Ok(map);
                }
            }
        }
        Err(Error::Numerical(format!("no well-conditioned degree-{d} map found")))
    }
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::default(), |acc, &a| acc * z + a)
}

/// Homogeneous coordinates (Z₀, Z₁) of x with Z₀/Z₁ = (x₁ + i x₂)/(1 − x₃),
/// choosing whichever representative is farther from zero.
pub fn homogeneous_point(x: &Vec3) -> (Complex64, Complex64) {
    if x.z <= 0.0 {
        (Complex64::new(x.x, x.y), Complex64::new(1.0 - x.z, 0.0))
    } else {
        (Complex64::new(1.0 + x.z, 0.0), Complex64::new(x.x, -x.y))
    }
}

fn format_complex(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else {
        format!("({}{:+}i)", c.re, c.im)
    }
}

/// Polynomial in the descriptor grammar, highest power first.
pub fn format_poly(c: &[Complex64]) -> String {
    let mut out = String::new();
    for k in (0..c.len()).rev() {
        let a = c[k];
        if a.norm() == 0.0 {
            continue;
        }
        if !out.is_empty() {
            out.push('+');
        }
        let coef = format_complex(a);
        match k {
            0 => out.push_str(&coef),
            _ => {
                if a != Complex64::new(1.0, 0.0) {
                    out.push_str(&coef);
                }
                out.push('z');
                if k > 1 {
                    let _ = write!(out, "^{k}");
                }
            }
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// A harmonic map from S² into a round sphere.
#[derive(Debug, Clone)]
pub enum HarmonicMap {
    Polynomial(PolynomialMap),
    Rational(RationalMap),
    /// Inner map followed by the totally geodesic inclusion S^k ⊂ S^n.
    Padded { inner: Box<HarmonicMap>, n_new: usize },
}

/// Value and derivative of a map at a point.
#[derive(Debug, Clone)]
pub struct MapSample {
    pub value: Vec<f64>,
    /// dΦ applied to the two vectors of an orthonormal tangent frame.
    pub jacobian: [Vec<f64>; 2],
    pub frame: [Vec3; 2],
}

impl HarmonicMap {
    pub fn descriptor(&self) -> String {
        match self {
            HarmonicMap::Polynomial(p) => p.label.clone(),
            HarmonicMap::Rational(r) => r.label.clone(),
            HarmonicMap::Padded { inner, n_new } => format!("pad:{}:{}", inner.descriptor(), n_new),
        }
    }

    /// Number of components n + 1 of the ambient R^{n+1}.
    pub fn ambient_dim(&self) -> usize {
        match self {
            HarmonicMap::Polynomial(p) => p.components.len(),
            HarmonicMap::Rational(_) => 3,
            HarmonicMap::Padded { n_new, .. } => n_new + 1,
        }
    }

    /// Half-dimension m of the smallest target sphere S^{2m} spanned by the map.
    pub fn m(&self) -> usize {
        match self {
            HarmonicMap::Polynomial(p) => p.m,
            HarmonicMap::Rational(_) => 1,
            HarmonicMap::Padded { inner, .. } => inner.m(),
        }
    }

    pub fn linearly_full(&self) -> bool {
        !matches!(self, HarmonicMap::Padded { .. })
    }

    /// Φ(−x) = Φ(x), so the map descends to RP².
    pub fn is_antipodally_even(&self) -> bool {
        match self {
            HarmonicMap::Polynomial(p) => p.is_antipodally_even(),
            HarmonicMap::Rational(_) => false,
            HarmonicMap::Padded { inner, .. } => inner.is_antipodally_even(),
        }
    }

    pub fn value(&self, x: &Vec3) -> Vec<f64> {
        match self {
            HarmonicMap::Polynomial(p) => p.components.iter().map(|f| f.eval(x)).collect(),
            HarmonicMap::Rational(r) => r.eval(x).iter().copied().collect(),
            HarmonicMap::Padded { inner, n_new } => {
                let mut v = inner.value(x);
                v.resize(n_new + 1, 0.0);
                v
            }
        }
    }

    /// ½|∇Φ|² for the round metric, from closed-form derivatives.
    pub fn energy_density_at(&self, x: &Vec3) -> f64 {
        match self {
            HarmonicMap::Polynomial(p) => {
                0.5 * (0..p.components.len()).map(|j| p.tangential_gradient(j, x).norm_squared()).sum::<f64>()
            }
            HarmonicMap::Rational(r) => r.energy_density(x),
            HarmonicMap::Padded { inner, .. } => inner.energy_density_at(x),
        }
    }

    /// Components as jets of order `order` in the chart coordinate around w₀.
    pub fn jet(&self, chart: &Chart, w0: Complex64, order: usize) -> Vec<Jet> {
        match self {
            HarmonicMap::Polynomial(p) => {
                let x = chart_point_jets(chart, w0, order);
                let deg = p.components.iter().map(Poly3::degree).max().unwrap_or(0) as usize;
                let pw: [Vec<Jet>; 3] = std::array::from_fn(|a| {
                    let mut v = vec![Jet::real(order, 1.0)];
                    for k in 1..=deg {
                        let next = &v[k - 1] * &x[a];
                        v.push(next);
                    }
                    v
                });
                p.components.iter().map(|f| f.eval_jet(&pw)).collect()
            }
            HarmonicMap::Rational(r) => {
                let x = chart_point_jets(chart, w0, order);
                let base = Vec3::new(x[0].value().re, x[1].value().re, x[2].value().re);
                let i = Complex64::new(0.0, 1.0);
                let one = Jet::real(order, 1.0);
                let (z0, z1) = if base.z <= 0.0 {
                    (&x[0] + &x[1].scale(i), &one - &x[2])
                } else {
                    (&one + &x[2], &x[0] - &x[1].scale(i))
                };
                let p = RationalMap::homogeneous_jet(&r.p, r.d, &z0, &z1);
                let q = RationalMap::homogeneous_jet(&r.q, r.d, &z0, &z1);
                let pq = &p * &q.conj();
                let (pp, qq) = (&p * &p.conj(), &q * &q.conj());
                let inv = (&pp + &qq).recip();
                vec![(&pq.re() * &inv).scale_re(2.0), (&pq.im() * &inv).scale_re(2.0), &(&pp - &qq) * &inv]
            }
            HarmonicMap::Padded { inner, n_new } => {
                let mut v = inner.jet(chart, w0, order);
                v.resize(n_new + 1, Jet::zero(order));
                v
            }
        }
    }

    /// Value and tangent-frame derivative at x.
    pub fn sample(&self, x: &Vec3) -> MapSample {
        let chart = Chart::new(*x);
        let j = self.jet(&chart, Complex64::new(0.0, 0.0), 1);
        // at the chart centre the metric is 4|dw|², so ½∂_u, ½∂_v are orthonormal
        let value = j.iter().map(|c| c.value().re).collect();
        let d: Vec<Complex64> = j.iter().map(|c| c.dz().value()).collect();
        let e1 = chart.rotation.transpose() * Vec3::new(1.0, 0.0, 0.0);
        let e2 = chart.rotation.transpose() * Vec3::new(0.0, 1.0, 0.0);
        MapSample {
            value,
            jacobian: [d.iter().map(|c| c.re).collect(), d.iter().map(|c| -c.im).collect()],
            frame: [e1, e2],
        }
    }

    /// max over samples of |ΔΦ − |∇Φ|²Φ| with Δ the positive Laplacian.
    /// Holomorphic maps are harmonic by construction and return exactly 0.
    pub fn harmonicity_residual(&self, samples: &[Vec3]) -> f64 {
        match self {
            HarmonicMap::Rational(_) => 0.0,
            HarmonicMap::Padded { inner, .. } => inner.harmonicity_residual(samples),
            HarmonicMap::Polynomial(p) => samples
                .iter()
                .map(|x| {
                    let x = x.normalize();
                    let grad2: f64 = (0..p.components.len()).map(|j| p.tangential_gradient(j, &x).norm_squared()).sum();
                    (0..p.components.len())
                        .map(|j| (-p.sphere_laplacian(j, &x) - grad2 * p.components[j].eval(&x)).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max),
        }
    }
}

/// The sphere point of the chart coordinate w as three real-valued jets.
pub fn chart_point_jets(chart: &Chart, w0: Complex64, order: usize) -> [Jet; 3] {
    let w = Jet::z(order, w0);
    let wb = Jet::zbar(order, w0);
    let one = Jet::real(order, 1.0);
    let r2 = &w * &wb;
    let inv = (&one + &r2).recip();
    let y = [
        &(&w + &wb) * &inv,
        &(&w - &wb).scale(Complex64::new(0.0, -1.0)) * &inv,
        &(&r2 - &one) * &inv,
    ];
    let rt = chart.rotation.transpose();
    std::array::from_fn(|a| {
        let mut acc = Jet::zero(order);
        for (b, yb) in y.iter().enumerate() {
            acc = &acc + &yb.scale_re(rt[(a, b)]);
        }
        acc
    })
}

/// Pad a map with zero components into S^{n_new}.
pub fn embed_in_larger_sphere(map: &HarmonicMap, n_new: usize) -> Result<HarmonicMap> {
    if n_new + 1 <= map.ambient_dim() {
        return Err(Error::Validation(format!(
            "target S^{n_new} is not larger than the current S^{}",
            map.ambient_dim() - 1
        )));
    }
    let inner = match map {
        HarmonicMap::Padded { inner, .. } => inner.clone(),
        other => Box::new(other.clone()),
    };
    Ok(HarmonicMap::Padded { inner, n_new })
}

/// Per-vertex energy density ρ = ½|∇Φ|² in the round gauge.
pub fn energy_density(map: &HarmonicMap, mesh: &SphereMesh) -> Result<Density> {
    Density::new(mesh.vertices.iter().map(|x| map.energy_density_at(x)).collect())
}

/// Harmonic degree d = E/4π, rounded; fails unless within 0.1 of an integer.
pub fn degree(map: &HarmonicMap, mesh: &SphereMesh) -> Result<usize> {
    let e = energy(map, mesh)?;
    let d = (e / (4.0 * PI)).round();
    if (e / (4.0 * PI) - d).abs() > 0.1 || d < 1.0 {
        return Err(Error::Numerical(format!(
            "energy/4π = {:.4} is not an integer: map not harmonic or mesh too coarse",
            e / (4.0 * PI)
        )));
    }
    Ok(d as usize)
}

/// Dirichlet energy ∫ ½|∇Φ|² dv_round by vertex quadrature.
pub fn energy(map: &HarmonicMap, mesh: &SphereMesh) -> Result<f64> {
    let areas = vertex_areas(mesh)?;
    Ok(mesh.vertices.iter().zip(&areas).map(|(x, a)| map.energy_density_at(x) * a).sum())
}

// ---------------------------------------------------------------------------
// descriptor grammar

/// Parse "veronese:m", "rational:p(z)/q(z)" or "pad:<inner>:<n>".
pub fn parse_descriptor(s: &str) -> Result<HarmonicMap> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("veronese:") {
        let m: usize = rest.trim().parse().map_err(|_| Error::Parse(format!("bad veronese degree '{rest}'")))?;
        return Ok(HarmonicMap::Polynomial(veronese(m)?));
    }
    if let Some(rest) = s.strip_prefix("rational:") {
        let (num, den) = split_fraction(rest)?;
        let p = parse_polynomial(num)?;
        let q = match den {
            Some(d) => parse_polynomial(d)?,
            None => vec![Complex64::new(1.0, 0.0)],
        };
        let mut r = RationalMap::new(p, q)?;
        r.label = format!("rational:{}", rest.trim());
        return Ok(HarmonicMap::Rational(r));
    }
    if let Some(rest) = s.strip_prefix("pad:") {
        let (inner, n) = rest.rsplit_once(':').ok_or_else(|| Error::Parse(format!("pad needs '<inner>:<n>', got '{rest}'")))?;
        let n: usize = n.trim().parse().map_err(|_| Error::Parse(format!("bad sphere dimension '{n}'")))?;
        let inner = parse_descriptor(inner)?;
        return embed_in_larger_sphere(&inner, n);
    }
    Err(Error::Parse(format!("unknown map descriptor '{s}'")))
}

fn split_fraction(s: &str) -> Result<(&str, Option<&str>)> {
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '/' if depth == 0 => return Ok((&s[..i], Some(&s[i + 1..]))),
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced parentheses in '{s}'")));
    }
    Ok((s, None))
}

/// Parse a complex polynomial in z, e.g. "(1+2i)z^2 - 0.5z + 3"; returns
/// coefficients constant term first.
pub fn parse_polynomial(s: &str) -> Result<Vec<Complex64>> {
    let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0;
    let coeffs = parse_sum(&chars, &mut pos)?;
    if pos != chars.len() {
        return Err(Error::Parse(format!("unexpected '{}' in polynomial '{s}'", chars[pos])));
    }
    if coeffs.is_empty() {
        return Err(Error::Parse("empty polynomial".into()));
    }
    Ok(coeffs)
}

fn parse_sum(c: &[char], pos: &mut usize) -> Result<Vec<Complex64>> {
    let mut out: Vec<Complex64> = Vec::new();
    let mut first = true;
    while *pos < c.len() && c[*pos] != ')' {
        let mut sign = 1.0;
        if c[*pos] == '+' || c[*pos] == '-' {
            if c[*pos] == '-' {
                sign = -1.0;
            }
            *pos += 1;
        } else if !first {
            return Err(Error::Parse(format!("expected '+' or '-' at position {}", *pos)));
        }
        first = false;
        let term = parse_term(c, pos)?;
        if out.len() < term.len() {
            out.resize(term.len(), Complex64::default());
        }
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t * sign;
        }
    }
    Ok(out)
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// A product of factors: numbers, `i`, `z^k` and parenthesised sums.
fn parse_term(c: &[char], pos: &mut usize) -> Result<Vec<Complex64>> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    let mut factors = 0;
    loop {
        if *pos < c.len() && c[*pos] == '*' && factors > 0 {
            *pos += 1;
        }
        let Some(&ch) = c.get(*pos) else { break };
        let factor: Vec<Complex64> = if ch == '(' {
            *pos += 1;
            let inner = parse_sum(c, pos)?;
            if *pos >= c.len() || c[*pos] != ')' {
                return Err(Error::Parse("missing ')'".into()));
            }
            *pos += 1;
            if inner.is_empty() {
                return Err(Error::Parse("empty parentheses".into()));
            }
            inner
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = *pos;
            while *pos < c.len() && (c[*pos].is_ascii_digit() || c[*pos] == '.') {
                *pos += 1;
            }
            let text: String = c[start..*pos].iter().collect();
            let v: f64 = text.parse().map_err(|_| Error::Parse(format!("bad number '{text}'")))?;
            vec![Complex64::new(v, 0.0)]
        } else if ch == 'i' {
            *pos += 1;
            vec![Complex64::new(0.0, 1.0)]
        } else if ch == 'z' {
            *pos += 1;
            let mut power = 1;
            if *pos < c.len() && c[*pos] == '^' {
                *pos += 1;
                let start = *pos;
                while *pos < c.len() && c[*pos].is_ascii_digit() {
                    *pos += 1;
                }
                let text: String = c[start..*pos].iter().collect();
                power = text.parse().map_err(|_| Error::Parse(format!("bad exponent '{text}'")))?;
            }
            let mut v = vec![Complex64::default(); power + 1];
            v[power] = Complex64::new(1.0, 0.0);
            v
        } else {
            break;
        };
        acc = poly_mul(&acc, &factor);
        factors += 1;
    }
    if factors == 0 {
        return Err(Error::Parse(format!("expected a coefficient or z at position {}", *pos)));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, UnitSphere};

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p: [f64; 3] = UnitSphere.sample(&mut rng);
                Vec3::new(p[0], p[1], p[2])
            })
            .collect()
    }

    #[test]
    fn harmonic_basis_is_harmonic_and_unit() {
        for m in 1..=4 {
            let basis = spherical_harmonic_basis(m);
            assert_eq!(basis.len(), 2 * m + 1);
            for f in &basis {
                assert!(f.laplacian().max_abs_coeff() < 1e-12, "degree {m} component not harmonic");
                assert_eq!(f.degree() as usize, m);
            }
            for x in random_points(100, m as u64) {
                let s: f64 = basis.iter().map(|f| f.eval(&x).powi(2)).sum();
                assert!((s - 1.0).abs() < 1e-12, "m={m}: Σf² = {s}");
            }
        }
    }

    #[test]
    fn veronese_one_is_identity() {
        let v = veronese(1).unwrap();
        let x = Vec3::new(0.36, -0.48, 0.8);
        let val: Vec<f64> = v.components.iter().map(|f| f.eval(&x)).collect();
        assert!((val[0] - 0.36).abs() < 1e-15 && (val[1] + 0.48).abs() < 1e-15 && (val[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn veronese_parity_and_range() {
        assert!(veronese(2).unwrap().is_antipodally_even());
        assert!(!veronese(3).unwrap().is_antipodally_even());
        assert!(veronese(0).is_err() && veronese(5).is_err());
    }

    #[test]
    fn veronese_densities_are_constant() {
        for m in 1..=4 {
            let map = HarmonicMap::Polynomial(veronese(m).unwrap());
            for x in random_points(20, 7) {
                let rho = map.energy_density_at(&x);
                assert!((rho - (m * (m + 1)) as f64 / 2.0).abs() < 1e-11);
            }
            assert!(map.harmonicity_residual(&random_points(50, 3)) < 1e-10);
        }
    }

    #[test]
    fn explicit_degree_two_components() {
        // (√3xy, √3yz, √3xz, (√3/2)(x²−y²), ½(3z²−1)) up to an orthogonal change of basis
        let map = veronese(2).unwrap();
        for x in random_points(10, 11) {
            let explicit = [
                3f64.sqrt() * x.x * x.y,
                3f64.sqrt() * x.y * x.z,
                3f64.sqrt() * x.x * x.z,
                3f64.sqrt() / 2.0 * (x.x * x.x - x.y * x.y),
                0.5 * (3.0 * x.z * x.z - 1.0),
            ];
            let ours: Vec<f64> = map.components.iter().map(|f| f.eval(&x)).collect();
            let n1: f64 = explicit.iter().map(|v| v * v).sum();
            let n2: f64 = ours.iter().map(|v| v * v).sum();
            assert!((n1 - 1.0).abs() < 1e-14 && (n2 - 1.0).abs() < 1e-14);
            // Gram of values at a second point is basis independent
            let y = Vec3::new(x.y, x.z, x.x);
            let e2 = [
                3f64.sqrt() * y.x * y.y,
                3f64.sqrt() * y.y * y.z,
                3f64.sqrt() * y.x * y.z,
                3f64.sqrt() / 2.0 * (y.x * y.x - y.y * y.y),
                0.5 * (3.0 * y.z * y.z - 1.0),
            ];
            let o2: Vec<f64> = map.components.iter().map(|f| f.eval(&y)).collect();
            let g1: f64 = explicit.iter().zip(&e2).map(|(a, b)| a * b).sum();
            let g2: f64 = ours.iter().zip(&o2).map(|(a, b)| a * b).sum();
            assert!((g1 - g2).abs() < 1e-13);
        }
    }

    #[test]
    fn rational_identity_is_the_identity() {
        let id = RationalMap::identity();
        for x in random_points(20, 5) {
            assert!((id.eval(&x) - x).norm() < 1e-14);
            assert!((id.energy_density(&x) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rational_density_matches_chart_formula() {
        let map = RationalMap::new(
            vec![Complex64::new(0.3, 0.1), Complex64::new(-1.0, 0.0), Complex64::new(0.5, 0.2)],
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.4)],
        )
        .unwrap();
        for x in random_points(30, 9) {
            let z = Complex64::new(x.x, x.y) / (1.0 - x.z);
            let h = 1e-6;
            let fp = (map.eval_z(z + h) - map.eval_z(z - h)) / (2.0 * h);
            let f = map.eval_z(z);
            let expect = (fp.norm() * (1.0 + z.norm_sqr()) / (1.0 + f.norm_sqr())).powi(2);
            assert!((map.energy_density(&x) - expect).abs() < 1e-6 * expect.max(1.0));
            // value agrees with inverse stereographic projection of f(z)
            let w = f;
            let y = Vec3::new(2.0 * w.re, 2.0 * w.im, w.norm_sqr() - 1.0) / (1.0 + w.norm_sqr());
            assert!((map.eval(&x) - y).norm() < 1e-12);
        }
    }

    #[test]
    fn jets_reproduce_values_and_density() {
        let maps = [
            HarmonicMap::Polynomial(veronese(3).unwrap()),
            HarmonicMap::Rational(RationalMap::power(3).unwrap()),
        ];
        for map in &maps {
            for x in random_points(10, 13) {
                let s = map.sample(&x);
                let v = map.value(&x);
                for (a, b) in s.value.iter().zip(&v) {
                    assert!((a - b).abs() < 1e-12);
                }
                let rho = 0.5 * (s.jacobian[0].iter().chain(&s.jacobian[1]).map(|c| c * c).sum::<f64>());
                assert!((rho - map.energy_density_at(&x)).abs() < 1e-10 * rho.max(1.0));
                let dot: f64 = s.value.iter().zip(&s.jacobian[0]).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn perturbed_component_is_not_harmonic() {
        let v = veronese(2).unwrap();
        let mut comps = v.components.clone();
        comps[0] = comps[0].add(&Poly3::coordinate(0).scale(0.3));
        let bad = HarmonicMap::Polynomial(PolynomialMap::from_components("perturbed", comps).unwrap());
        assert!(bad.harmonicity_residual(&random_points(50, 1)) > 0.1);
    }

    #[test]
    fn descriptors_parse() {
        let m = parse_descriptor("rational:z^3/1").unwrap();
        match &m {
            HarmonicMap::Rational(r) => assert_eq!(r.d, 3),
            _ => panic!(),
        }
        let m = parse_descriptor("rational:(1+2i)z^2 - 0.5z + 3/(z-1i)").unwrap();
        match &m {
            HarmonicMap::Rational(r) => {
                assert_eq!(r.p, vec![Complex64::new(3.0, 0.0), Complex64::new(-0.5, 0.0), Complex64::new(1.0, 2.0)]);
                assert_eq!(r.q, vec![Complex64::new(0.0, -1.0), Complex64::new(1.0, 0.0)]);
            }
            _ => panic!(),
        }
        let p = parse_descriptor("pad:veronese:1:4").unwrap();
        assert_eq!(p.ambient_dim(), 5);
        assert!(!p.linearly_full());
        assert!(parse_descriptor("torus:3").is_err());
        assert!(parse_descriptor("rational:z^2/z").is_err());
        assert!(parse_descriptor("rational:z^2+/1").is_err());
    }

    #[test]
    fn mobius_postcomposition() {
        let f = RationalMap::power(2).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::default();
        let same = f.mobius_postcompose(one, zero, zero, one).unwrap();
        assert_eq!((same.p.clone(), same.q.clone()), (f.p.clone(), f.q.clone()));
        let dil = f.mobius_postcompose(Complex64::new(2.0, 0.0), zero, zero, one).unwrap();
        assert_eq!(dil.d, 2);
        assert!(f.mobius_postcompose(one, one, one, one).is_err());
    }

    #[test]
    fn padding_keeps_energy() {
        let v = HarmonicMap::Polynomial(veronese(1).unwrap());
        let p = embed_in_larger_sphere(&v, 4).unwrap();
        let x = Vec3::new(0.0, 0.6, 0.8);
        let val = p.value(&x);
        assert_eq!(val.len(), 5);
        assert_eq!((val[3], val[4]), (0.0, 0.0));
        assert_eq!(p.energy_density_at(&x), v.energy_density_at(&x));
        assert!(embed_in_larger_sphere(&v, 2).is_err());
    }
}
