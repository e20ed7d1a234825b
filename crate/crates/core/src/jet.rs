//! Truncated Taylor expansions in (z, z̄) treated as independent variables.
//!
//! A jet of order N at a base point z₀ stores the complex coefficients
//! c_ab of f(z₀ + s, z̄₀ + t) = Σ_{a+b ≤ N} c_ab sᵃ tᵇ. Arithmetic is exact up
//! to the truncation order, so derivatives of compositions are analytic
//! rather than finite-difference approximations; each ∂ or ∂̄ lowers the
//! order by one.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    order: usize,
    c: Vec<Complex64>,
}

#[inline]
fn idx(a: usize, b: usize) -> usize {
    let s = a + b;
    s * (s + 1) / 2 + b
}

fn len_for(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

impl Jet {
    pub fn zero(order: usize) -> Self {
        Jet { order, c: vec![Complex64::new(0.0, 0.0); len_for(order)] }
    }

    pub fn constant(order: usize, v: Complex64) -> Self {
        let mut j = Jet::zero(order);
        j.c[0] = v;
        j
    }

    pub fn real(order: usize, v: f64) -> Self {
        Jet::constant(order, Complex64::new(v, 0.0))
    }

    /// The coordinate z at base point z₀.
    pub fn z(order: usize, z0: Complex64) -> Self {
        let mut j = Jet::constant(order, z0);
        if order >= 1 {
            j.c[idx(1, 0)] = Complex64::new(1.0, 0.0);
        }
        j
    }

    /// The coordinate z̄ at base point z₀.
    pub fn zbar(order: usize, z0: Complex64) -> Self {
        let mut j = Jet::constant(order, z0.conj());
        if order >= 1 {
            j.c[idx(0, 1)] = Complex64::new(1.0, 0.0);
        }
        j
    }

    /// Jet with coefficients c_ab = coeff(a, b), i.e. ∂ᵃ∂̄ᵇf(z₀)/(a!b!).
    pub fn from_coefficients(order: usize, coeff: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut j = Jet::zero(order);
        for s in 0..=order {
            for b in 0..=s {
                j.c[idx(s - b, b)] = coeff(s - b, b);
            }
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    /// Taylor coefficient of sᵃ tᵇ (zero beyond the order).
    pub fn coeff(&self, a: usize, b: usize) -> Complex64 {
        if a + b <= self.order {
            self.c[idx(a, b)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Mixed partial ∂ᵃ∂̄ᵇ f at the base point.
    pub fn derivative(&self, a: usize, b: usize) -> Complex64 {
        self.coeff(a, b) * (factorial(a) * factorial(b))
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Jet { order, c: self.c[..len_for(order)].to_vec() }
    }

    /// ∂/∂z.
    pub fn dz(&self) -> Self {
        assert!(self.order >= 1, "cannot differentiate a jet of order 0");
        let order = self.order - 1;
        let mut out = Jet::zero(order);
        for s in 0..=order {
            for b in 0..=s {
                let a = s - b;
                out.c[idx(a, b)] = self.c[idx(a + 1, b)] * (a as f64 + 1.0);
            }
        }
        out
    }

    /// ∂/∂z̄.
    pub fn dzb(&self) -> Self {
        assert!(self.order >= 1, "cannot differentiate a jet of order 0");
        let order = self.order - 1;
        let mut out = Jet::zero(order);
        for s in 0..=order {
            for b in 0..=s {
                let a = s - b;
                out.c[idx(a, b)] = self.c[idx(a, b + 1)] * (b as f64 + 1.0);
            }
        }
        out
    }

    /// Complex conjugate function: d_ab = conj(c_ba).
    pub fn conj(&self) -> Self {
        let mut out = Jet::zero(self.order);
        for s in 0..=self.order {
            for b in 0..=s {
                let a = s - b;
                out.c[idx(a, b)] = self.c[idx(b, a)].conj();
            }
        }
        out
    }

    /// Real part (f + f̄)/2 as a function.
    pub fn re(&self) -> Self {
        (self + &self.conj()).scale(Complex64::new(0.5, 0.0))
    }

    /// Imaginary part (f − f̄)/(2i) as a function.
    pub fn im(&self) -> Self {
        (self - &self.conj()).scale(Complex64::new(0.0, -0.5))
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Jet { order: self.order, c: self.c.iter().map(|v| v * k).collect() }
    }

    pub fn scale_re(&self, k: f64) -> Self {
        self.scale(Complex64::new(k, 0.0))
    }

    /// g(f) for g analytic at f(z₀), given gᵏ(f(z₀))/k! for k = 0..=order.
    pub fn compose(&self, taylor: &[Complex64]) -> Self {
        let mut h = self.clone();
        h.c[0] = Complex64::new(0.0, 0.0);
        let mut out = Jet::constant(self.order, taylor[0]);
        let mut power = Jet::constant(self.order, Complex64::new(1.0, 0.0));
        for coeff in taylor.iter().take(self.order + 1).skip(1) {
            power = &power * &h;
            out = &out + &power.scale(*coeff);
        }
        out
    }

    pub fn recip(&self) -> Self {
        let v = self.c[0];
        let inv = 1.0 / v;
        let mut t = Vec::with_capacity(self.order + 1);
        let mut p = inv;
        for _ in 0..=self.order {
            t.push(p);
            p *= -inv;
        }
        self.compose(&t)
    }

    pub fn div(&self, other: &Jet) -> Self {
        self * &other.recip()
    }

    /// Principal logarithm.
    pub fn ln(&self) -> Self {
        let v = self.c[0];
        let mut t = Vec::with_capacity(self.order + 1);
        t.push(v.ln());
        let inv = 1.0 / v;
        let mut p = inv;
        for k in 1..=self.order {
            t.push(p / k as f64 * if k % 2 == 1 { 1.0 } else { -1.0 });
            p *= inv;
        }
        self.compose(&t)
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Self {
        let v = self.c[0];
        let mut t = Vec::with_capacity(self.order + 1);
        // binomial series (1+u)^{1/2} scaled by √v / vᵏ
        let root = v.sqrt();
        let inv = 1.0 / v;
        let mut binom = 1.0;
        let mut p = Complex64::new(1.0, 0.0);
        for k in 0..=self.order {
            t.push(root * p * binom);
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
            p *= inv;
        }
        self.compose(&t)
    }

    pub fn powi(&self, k: usize) -> Self {
        let mut out = Jet::constant(self.order, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let n = len_for(order);
        Jet { order, c: (0..n).map(|i| self.c[i] + rhs.c[i]).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let n = len_for(order);
        Jet { order, c: (0..n).map(|i| self.c[i] - rhs.c[i]).collect() }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { order: self.order, c: self.c.iter().map(|v| -v).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut out = Jet::zero(order);
        for s1 in 0..=order {
            for b1 in 0..=s1 {
                let a1 = s1 - b1;
                let x = self.c[idx(a1, b1)];
                if x == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for s2 in 0..=(order - s1) {
                    for b2 in 0..=s2 {
                        let a2 = s2 - b2;
                        out.c[idx(a1 + a2, b1 + b2)] += x * rhs.c[idx(a2, b2)];
                    }
                }
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

/// Hermitian product Σ uᵢ·conj(vᵢ) of vector-valued jets.
pub fn hermitian(u: &[Jet], v: &[Jet]) -> Jet {
    let order = u.iter().chain(v).map(|j| j.order()).min().unwrap_or(0);
    let mut out = Jet::zero(order);
    for (a, b) in u.iter().zip(v) {
        out = &out + &(a * &b.conj());
    }
    out
}

/// Complex bilinear product Σ uᵢ·vᵢ.
pub fn bilinear(u: &[Jet], v: &[Jet]) -> Jet {
    let order = u.iter().chain(v).map(|j| j.order()).min().unwrap_or(0);
    let mut out = Jet::zero(order);
    for (a, b) in u.iter().zip(v) {
        out = &out + &(a * b);
    }
    out
}

/// |u|² = ⟨u, u⟩ as a (real-valued) jet.
pub fn norm_sqr(u: &[Jet]) -> Jet {
    hermitian(u, u)
}

/// Componentwise scalar multiple s·u.
pub fn scale_vec(u: &[Jet], s: &Jet) -> Vec<Jet> {
    u.iter().map(|a| a * s).collect()
}

pub fn add_vec(u: &[Jet], v: &[Jet]) -> Vec<Jet> {
    u.iter().zip(v).map(|(a, b)| a + b).collect()
}

pub fn sub_vec(u: &[Jet], v: &[Jet]) -> Vec<Jet> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

pub fn dz_vec(u: &[Jet]) -> Vec<Jet> {
    u.iter().map(Jet::dz).collect()
}

pub fn dzb_vec(u: &[Jet]) -> Vec<Jet> {
    u.iter().map(Jet::dzb).collect()
}

pub fn conj_vec(u: &[Jet]) -> Vec<Jet> {
    u.iter().map(Jet::conj).collect()
}

/// Largest coefficient of any component, up to the given order.
pub fn max_abs_vec(u: &[Jet], order: usize) -> f64 {
    u.iter().map(|j| j.truncate(order).max_abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_rule_and_conjugation() {
        let z0 = c(0.3, -0.7);
        let z = Jet::z(5, z0);
        let zb = Jet::zbar(5, z0);
        let r2 = &z * &zb;
        // ∂(z z̄) = z̄, ∂̄(z z̄) = z
        assert!((r2.dz().value() - z0.conj()).norm() < 1e-15);
        assert!((r2.dzb().value() - z0).norm() < 1e-15);
        assert!((r2.derivative(1, 1) - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(z.conj(), zb);
    }

    #[test]
    fn reciprocal_and_log_match_closed_forms() {
        let z0 = c(0.4, 0.2);
        let z = Jet::z(6, z0);
        let one = Jet::real(6, 1.0);
        let f = (&one + &z).recip();
        // d³/dz³ 1/(1+z) = −6/(1+z)⁴
        let expect = -6.0 / (c(1.0, 0.0) + z0).powi(4);
        assert!((f.derivative(3, 0) - expect).norm() < 1e-12);
        let g = (&one + &z).ln();
        assert!((g.derivative(2, 0) + 1.0 / (c(1.0, 0.0) + z0).powi(2)).norm() < 1e-12);
        let h = (&one + &z).sqrt();
        assert!(((&h * &h) - (&one + &z)).max_abs() < 1e-14);
    }

    #[test]
    fn laplacian_of_log_conformal_factor() {
        // ∂∂̄ ln(1 + |z|²) = 1/(1 + |z|²)²
        let z0 = c(0.5, 0.25);
        let r2 = &Jet::z(4, z0) * &Jet::zbar(4, z0);
        let l = (&Jet::real(4, 1.0) + &r2).ln();
        let v = l.dz().dzb().value();
        let expect = 1.0 / (1.0 + z0.norm_sqr()).powi(2);
        assert!((v - c(expect, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn real_and_imaginary_parts() {
        let z0 = c(0.1, 0.9);
        let z = Jet::z(3, z0);
        let re = z.re();
        assert!((re.value() - c(0.1, 0.0)).norm() < 1e-15);
        assert!((re.dz().value() - c(0.5, 0.0)).norm() < 1e-15);
        let im = z.im();
        assert!((im.dz().value() - c(0.0, -0.5)).norm() < 1e-15);
    }
}
