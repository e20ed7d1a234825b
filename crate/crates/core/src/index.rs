//! Spectral and energy indices of harmonic maps.
//!
//! The spectral index counts eigenvalues of Δ_{g_Φ} below 2, where
//! g_Φ = ½|∇Φ|² g; the energy index counts negative eigenvalues of the
//! Jacobi operator V ↦ π_{Φ⊥}(ΔV − |∇Φ|²V) acting on fields V ⊥ Φ.

use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{count_threshold, solve_lowest_with, SolverOptions, SpectrumResult, ThresholdCount};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, vertex_areas, Density, Surface, SymmetricForm};
use crate::maps::{degree, energy_density, HarmonicMap};
use crate::mesh::SphereMesh;
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Relative guard for the spectral threshold 2.
pub const SPECTRAL_GUARD: f64 = 0.1;
/// Jacobi guard per unit of 2d (the eigenvalue scale of |∇Φ|²).
pub const ENERGY_GUARD_FACTOR: f64 = 0.05;

/// Settings shared by all index computations.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexOptions {
    /// Guard band around λ = 2 for the spectral count.
    pub spectral_guard: f64,
    /// Guard band around 0 for the Jacobi count; `None` means 0.05·2d.
    pub energy_guard: Option<f64>,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { spectral_guard: SPECTRAL_GUARD, energy_guard: None, tol: 1e-7, seed: 42 }
    }
}

impl IndexOptions {
    pub fn energy_guard_for(&self, d: usize) -> f64 {
        self.energy_guard.unwrap_or(ENERGY_GUARD_FACTOR * 2.0 * d as f64)
    }

    fn solver(&self, lower_bound: Option<f64>) -> SolverOptions {
        SolverOptions { tol: self.tol, seed: self.seed, lower_bound, ..Default::default() }
    }
}

/// Index and nullity with the eigenvalues they were counted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCount {
    pub index: usize,
    pub nullity: usize,
    pub stable: bool,
    pub guard: f64,
    pub eigenvalues: Vec<f64>,
}

impl IndexCount {
    fn from_threshold(c: ThresholdCount, spec: &SpectrumResult) -> Self {
        IndexCount { index: c.below, nullity: c.at, stable: c.stable, guard: c.guard_band, eigenvalues: spec.eigenvalues.clone() }
    }
}

/// Which part of the spectrum of a σ-invariant problem to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    /// Functions/fields on the whole sphere.
    Full,
    /// u(σx) = u(x): functions on RP².
    Even,
    /// u(σx) = −u(x).
    Odd,
}

/// Solve with growing count until the spectrum reaches past threshold + guard.
fn counted<F>(solve: F, threshold: f64, guard: f64, initial: usize, dim: usize) -> Result<(IndexCount, SpectrumResult)>
where
    F: Fn(usize) -> Result<SpectrumResult>,
{
    let mut count = initial.clamp(1, dim);
    loop {
        let spec = solve(count)?;
        let complete = count == dim;
        let res = if complete {
            crate::eigensolve::count_threshold_values(&spec.eigenvalues, threshold, guard, true)
        } else {
            count_threshold(&spec, threshold, guard)
        };
        match res {
            Ok(c) => return Ok((IndexCount::from_threshold(c, &spec), spec)),
            Err(Error::InsufficientSpectrum { .. }) if count < dim => count = (2 * count).min(dim),
            Err(e) => return Err(e),
        }
    }
}

/// Sparse restriction matrix of a sector: row i (vertex) → list of (orbit, ±1).
fn sector_rows(mesh: &SphereMesh, sector: Sector) -> Result<(Vec<Vec<(usize, f64)>>, usize)> {
    let n = mesh.num_vertices();
    match sector {
        Sector::Full => Ok(((0..n).map(|i| vec![(i, 1.0)]).collect(), n)),
        Sector::Even | Sector::Odd => {
            mesh.check_antipodal()?;
            let sigma = mesh.antipodal.as_ref().expect("checked above");
            let (orbit, count) = mesh.antipodal_orbits()?;
            let rows = (0..n)
                .map(|i| {
                    let s = if sector == Sector::Odd && sigma[i] < i { -1.0 } else { 1.0 };
                    vec![(orbit[i], s)]
                })
                .collect();
            Ok((rows, count))
        }
    }
}

/// Restriction of a scalar form to the functions of a σ-sector.
pub fn sector_form(form: &SymmetricForm, mesh: &SphereMesh, sector: Sector) -> Result<SymmetricForm> {
    if sector == Sector::Full {
        return Ok(form.clone());
    }
    let (rows, count) = sector_rows(mesh, sector)?;
    restrict(form, &rows, count)
}

/// Per-vertex values of a sector vector.
pub fn sector_lift(v: &[f64], mesh: &SphereMesh, sector: Sector) -> Result<Vec<f64>> {
    let (rows, _) = sector_rows(mesh, sector)?;
    Ok(rows.iter().map(|r| r.iter().map(|&(c, s)| s * v[c]).sum()).collect())
}

/// Lift sector rows through blocks of width `w`.
fn block_rows(rows: &[Vec<(usize, f64)>], w: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(rows.len() * w);
    for r in rows {
        for u in 0..w {
            out.push(r.iter().map(|&(c, s)| (c * w + u, s)).collect());
        }
    }
    out
}

fn restrict(form: &SymmetricForm, rows: &[Vec<(usize, f64)>], ncols: usize) -> Result<SymmetricForm> {
    let m = form.matrix().congruence(rows, ncols);
    SymmetricForm::new(symmetrize(m))
}

/// Average with the transpose to remove rounding asymmetry.
fn symmetrize(m: CsrMatrix) -> CsrMatrix {
    let mut trip = Vec::with_capacity(m.nnz());
    for r in 0..m.n {
        for (c, v) in m.row(r) {
            trip.push((r, c, 0.5 * v));
            trip.push((c, r, 0.5 * v));
        }
    }
    CsrMatrix::from_triplets(m.n, &trip)
}

// ---------------------------------------------------------------------------
// spectral index

/// Stiffness and ρ-weighted mass of Δ_{g_Φ}.
pub fn spectral_pencil(map: &HarmonicMap, mesh: &SphereMesh) -> Result<(SymmetricForm, SymmetricForm, Density)> {
    let rho = energy_density(map, mesh)?;
    Ok((assemble_stiffness(mesh)?, assemble_mass(mesh, &rho)?, rho))
}

fn spectral_in_sector(map: &HarmonicMap, mesh: &SphereMesh, sector: Sector, opts: &IndexOptions) -> Result<IndexCount> {
    let (k, m, _) = spectral_pencil(map, mesh)?;
    let (rows, dim) = sector_rows(mesh, sector)?;
    let (k, m) = if sector == Sector::Full { (k, m) } else { (restrict(&k, &rows, dim)?, restrict(&m, &rows, dim)?) };
    let d = map.m();
    let initial = ((d + 1) * (d + 1)).max(2 * map_degree_hint(map) + 2) + 6;
    let solver = opts.solver(Some(0.0));
    counted(|c| solve_lowest_with(&k, &m, c, &solver), 2.0, opts.spectral_guard, initial, dim).map(|x| x.0)
}

fn map_degree_hint(map: &HarmonicMap) -> usize {
    match map {
        HarmonicMap::Rational(r) => r.d,
        HarmonicMap::Polynomial(p) => p.m * (p.m + 1) / 2,
        HarmonicMap::Padded { inner, .. } => map_degree_hint(inner),
    }
}

/// (ind_S, nul_S) on S²: eigenvalues of Δ_{g_Φ} below / at 2.
pub fn spectral_index(map: &HarmonicMap, mesh: &SphereMesh, opts: &IndexOptions) -> Result<IndexCount> {
    spectral_in_sector(map, mesh, Sector::Full, opts)
}

/// (ind_S, nul_S) of the induced map on RP², from σ-even functions.
pub fn rp2_spectral_index(map: &HarmonicMap, mesh: &SphereMesh, opts: &IndexOptions) -> Result<IndexCount> {
    require_even(map)?;
    spectral_in_sector(map, mesh, Sector::Even, opts)
}

/// Spectral counts from the gauge-invariant form ∫|∇u|² − |∇Φ|²u² measured
/// against the weight c·ρ; the counts do not depend on c > 0.
pub fn spectral_index_in_gauge(map: &HarmonicMap, mesh: &SphereMesh, c: f64, opts: &IndexOptions) -> Result<IndexCount> {
    if !(c > 0.0) {
        return Err(Error::Validation(format!("gauge factor must be positive, got {c}")));
    }
    let (k, m, rho) = spectral_pencil(map, mesh)?;
    let a = SymmetricForm::new(k.matrix().add_scaled(1.0, m.matrix(), -2.0))?;
    let w = assemble_mass(mesh, &rho.scaled(c)?)?;
    let solver = opts.solver(Some(-2.0 / c));
    let initial = ((map.m() + 1) * (map.m() + 1)).max(2 * map_degree_hint(map) + 2) + 6;
    counted(|n| solve_lowest_with(&a, &w, n, &solver), 0.0, opts.spectral_guard / c, initial, mesh.num_vertices())
        .map(|x| x.0)
}

fn require_even(map: &HarmonicMap) -> Result<()> {
    if map.is_antipodally_even() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} is not antipodally even and does not descend to RP2", map.descriptor())))
    }
}

// ---------------------------------------------------------------------------
// Jacobi operator

/// The Jacobi pencil reduced to fields orthogonal to Φ at every vertex.
#[derive(Debug, Clone)]
pub struct JacobiPencil {
    /// Number of components of Φ.
    pub ambient: usize,
    /// Per-vertex orthonormal basis of Φ(x)^⊥ as the columns of an
    /// ambient × (ambient − 1) matrix.
    pub frames: Vec<DMatrix<f64>>,
    /// Reduced Dirichlet form Pᵀ(K ⊗ I)P.
    pub stiffness: SymmetricForm,
    /// Reduced Jacobi form: stiffness − |∇Φ|² weighted mass.
    pub a: SymmetricForm,
    /// Reduced round mass.
    pub b: SymmetricForm,
    /// Lower bound −max|∇Φ|² for the spectrum.
    pub lower_bound: f64,
    /// Per-vertex ρ = ½|∇Φ|².
    pub density: Vec<f64>,
}

/// Orthonormal basis of v^⊥ from the columns 2.. of the Householder reflection
/// that swaps e₁ with ±v.
pub fn householder_frame(v: &[f64]) -> DMatrix<f64> {
    let n = v.len();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut w: Vec<f64> = v.to_vec();
    w[0] += sign;
    let w2: f64 = w.iter().map(|x| x * x).sum();
    let h = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 2.0 * w[i] * w[j] / w2);
    h.columns(1, n - 1).into_owned()
}

impl JacobiPencil {
    pub fn new(map: &HarmonicMap, mesh: &SphereMesh) -> Result<Self> {
        let n = mesh.num_vertices();
        let big_n = map.ambient_dim();
        let w = big_n - 1;
        let frames: Vec<DMatrix<f64>> = mesh
            .vertices
            .iter()
            .map(|x| {
                let v = map.value(x);
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                householder_frame(&v.iter().map(|c| c / norm).collect::<Vec<_>>())
            })
            .collect();
        let k = assemble_stiffness(mesh)?;
        let areas = vertex_areas(mesh)?;
        let rho = energy_density(map, mesh)?.values;
        // blocks K_rc · P_rᵀ P_c, symmetric because P_rᵀP_c = (P_cᵀP_r)ᵀ
        let mut trip = Vec::with_capacity(k.matrix().nnz() * w * w);
        for r in 0..n {
            for (c, kv) in k.matrix().row(r) {
                let g = frames[r].transpose() * &frames[c];
                for u in 0..w {
                    for v in 0..w {
                        trip.push((r * w + u, c * w + v, kv * g[(u, v)]));
                    }
                }
            }
        }
        let stiffness = SymmetricForm::new(symmetrize(CsrMatrix::from_triplets(n * w, &trip)))?;
        let mass: Vec<f64> = areas.iter().flat_map(|&a| std::iter::repeat(a).take(w)).collect();
        let pot: Vec<f64> = (0..n).flat_map(|i| std::iter::repeat(2.0 * rho[i] * areas[i]).take(w)).collect();
        let a = SymmetricForm::new(stiffness.matrix().add_scaled(1.0, &CsrMatrix::diagonal(&pot), -1.0))?;
        let max_grad2 = rho.iter().fold(0.0f64, |acc, &r| acc.max(2.0 * r));
        Ok(JacobiPencil {
            ambient: big_n,
            frames,
            stiffness,
            a,
            b: SymmetricForm::diagonal(&mass),
            lower_bound: -max_grad2,
            density: rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    fn width(&self) -> usize {
        self.ambient - 1
    }

    /// Ambient field V(x_i) = P_i v_i.
    pub fn reconstruct(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let w = self.width();
        self.frames
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let local = nalgebra::DVector::from_column_slice(&v[i * w..(i + 1) * w]);
                (p * local).iter().copied().collect()
            })
            .collect()
    }

    /// Reduced coordinates P_iᵀ V(x_i) of an ambient field (tangential part).
    pub fn restrict_field(&self, field: &[Vec<f64>]) -> Vec<f64> {
        self.frames
            .iter()
            .zip(field)
            .flat_map(|(p, f)| (p.transpose() * nalgebra::DVector::from_column_slice(f)).iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Q_E(V) = ∫|∇V|² − |∇Φ|²|V|² for a reduced vector.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.a.quad_form(v)
    }

    pub fn rayleigh_quotient(&self, v: &[f64]) -> f64 {
        self.a.quad_form(v) / self.b.quad_form(v)
    }

    /// ‖A v‖_{H⁻¹} / ‖v‖_{H¹} with H¹ the form stiffness + mass; the natural
    /// relative size of the Jacobi residual of a field.
    pub fn jacobi_residual(&self, v: &[f64]) -> Result<f64> {
        let h = self.stiffness.matrix().add_scaled(1.0, self.b.matrix(), 1.0);
        let chol = EnvelopeCholesky::factor(&h)?;
        let r = self.a.mul_vec(v);
        let y = chol.solve(&r);
        let num: f64 = r.iter().zip(&y).map(|(a, b)| a * b).sum();
        let den = h.bilinear(v, v);
        Ok((num.max(0.0) / den).sqrt())
    }

    /// Pencil restricted to a σ-sector (requires σ-invariant frames, i.e. an even map).
    pub fn sector(&self, mesh: &SphereMesh, sector: Sector) -> Result<(SymmetricForm, SymmetricForm)> {
        if sector == Sector::Full {
            return Ok((self.a.clone(), self.b.clone()));
        }
        let (rows, count) = sector_rows(mesh, sector)?;
        let sigma = mesh.antipodal.as_ref().expect("sector_rows checks the involution");
        for (i, &j) in sigma.iter().enumerate() {
            if (&self.frames[i] - &self.frames[j]).amax() > 1e-12 {
                return Err(Error::Validation("map is not antipodally even: frames differ at antipodal vertices".into()));
            }
        }
        let w = self.width();
        let rows = block_rows(&rows, w);
        Ok((restrict(&self.a, &rows, count * w)?, restrict(&self.b, &rows, count * w)?))
    }

    /// Reduced fields A Φ for a basis of antisymmetric matrices A (rotations of the target).
    pub fn isometry_fields(&self, map: &HarmonicMap, mesh: &SphereMesh) -> Vec<Vec<f64>> {
        let n = self.ambient;
        let values: Vec<Vec<f64>> = mesh.vertices.iter().map(|x| map.value(x)).collect();
        let mut out = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                let field: Vec<Vec<f64>> = values
                    .iter()
                    .map(|phi| {
                        let mut v = vec![0.0; n];
                        v[a] = -phi[b];
                        v[b] = phi[a];
                        v
                    })
                    .collect();
                out.push(self.restrict_field(&field));
            }
        }
        out
    }
}

fn jacobi_initial_count(map: &HarmonicMap, d: usize) -> usize {
    let m = map.m();
    let n = map.ambient_dim() - 1;
    2 * (4 * d + 2 * m * m) + (n - 2 * m) * (2 * d + 2) + 8
}

fn jacobi_solver(p: &JacobiPencil, opts: &IndexOptions) -> SolverOptions {
    opts.solver(Some(p.lower_bound))
}

/// Lowest `count` eigenpairs of the Jacobi pencil.
pub fn jacobi_spectrum(map: &HarmonicMap, mesh: &SphereMesh, count: usize, seed: u64) -> Result<SpectrumResult> {
    let p = JacobiPencil::new(map, mesh)?;
    let opts = IndexOptions { seed, ..Default::default() };
    solve_lowest_with(&p.a, &p.b, count, &jacobi_solver(&p, &opts))
}

fn energy_in_sector(map: &HarmonicMap, mesh: &SphereMesh, d: usize, sector: Sector, opts: &IndexOptions) -> Result<IndexCount> {
    let p = JacobiPencil::new(map, mesh)?;
    let (a, b) = p.sector(mesh, sector)?;
    let mut initial = jacobi_initial_count(map, d);
    if sector != Sector::Full {
        initial = initial / 2 + 4;
    }
    let solver = jacobi_solver(&p, opts);
    let dim = a.dim();
    counted(|c| solve_lowest_with(&a, &b, c, &solver), 0.0, opts.energy_guard_for(d), initial, dim).map(|x| x.0)
}

/// (ind_E, nul_E) on S²: negative / near-zero eigenvalues of the Jacobi pencil.
pub fn energy_index(map: &HarmonicMap, mesh: &SphereMesh, d: usize, opts: &IndexOptions) -> Result<IndexCount> {
    energy_in_sector(map, mesh, d, Sector::Full, opts)
}

/// Energy counts of the induced map on RP² together with the full-sphere and
/// odd-sector counts that certify the halving law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rp2EnergyIndex {
    pub even: IndexCount,
    pub odd: IndexCount,
    pub full: IndexCount,
    /// even = ½ full and odd = even, for both index and nullity.
    pub halving_holds: bool,
}

pub fn rp2_energy_index(map: &HarmonicMap, mesh: &SphereMesh, d: usize, opts: &IndexOptions) -> Result<Rp2EnergyIndex> {
    require_even(map)?;
    let even = energy_in_sector(map, mesh, d, Sector::Even, opts)?;
    let odd = energy_in_sector(map, mesh, d, Sector::Odd, opts)?;
    let full = energy_in_sector(map, mesh, d, Sector::Full, opts)?;
    let halving_holds = 2 * even.index == full.index
        && 2 * even.nullity == full.nullity
        && odd.index == even.index
        && odd.nullity == even.nullity;
    Ok(Rp2EnergyIndex { even, odd, full, halving_holds })
}

// ---------------------------------------------------------------------------
// reports and inequalities

/// One evaluated inequality (or identity) between computed integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// ">=" or "=".
    pub relation: String,
    /// The inequality in symbols, e.g. "nul_E >= 4d + 2m^2".
    pub statement: String,
    /// lhs equals rhs exactly.
    pub equality: bool,
}

/// Everything the inequality checks consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub map: String,
    pub surface: Surface,
    pub mesh_level: usize,
    pub m: usize,
    /// Dimension n of the target sphere S^n.
    pub n: usize,
    pub d: usize,
    pub linearly_full: bool,
    #[serde(rename = "ind_S")]
    pub ind_s: usize,
    #[serde(rename = "nul_S")]
    pub nul_s: usize,
    #[serde(rename = "ind_E")]
    pub ind_e: usize,
    #[serde(rename = "nul_E")]
    pub nul_e: usize,
    pub stable: bool,
    pub stability_flags: Vec<String>,
    pub spectral_guard: f64,
    pub energy_guard: f64,
    /// ind_E of the linearly full map inside a padded one.
    #[serde(rename = "inner_ind_E", default, skip_serializing_if = "Option::is_none")]
    pub inner_ind_e: Option<usize>,
    /// RP² only: whether the even/odd/full Jacobi counts obey the halving law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halving_holds: Option<bool>,
    pub inequalities: Vec<Verdict>,
}

type Q = Ratio<i64>;

fn q(n: i64) -> Q {
    Q::from_integer(n)
}

fn verdict(name: &str, statement: &str, lhs: Q, rhs: Q, relation: &str) -> Verdict {
    let pass = match relation {
        "=" => lhs == rhs,
        _ => lhs >= rhs,
    };
    let f = |x: Q| *x.numer() as f64 / *x.denom() as f64;
    Verdict {
        name: name.into(),
        pass,
        lhs: f(lhs),
        rhs: f(rhs),
        relation: relation.into(),
        statement: statement.into(),
        equality: lhs == rhs,
    }
}

/// Evaluate every inequality that applies to the report, in exact arithmetic.
///
/// S² reports of linearly full maps get all six sphere inequalities; RP²
/// reports get the three that hold on RP²; padded maps get the subsphere
/// decomposition identity plus the inequalities that need no fullness.
pub fn verify_inequalities(r: &IndexReport) -> Vec<Verdict> {
    let (is, ns, ie, ne) = (r.ind_s as i64, r.nul_s as i64, r.ind_e as i64, r.nul_e as i64);
    let (m, d, n) = (r.m as i64, r.d as i64, r.n as i64);
    let mut out = Vec::new();
    let sphere = r.surface == Surface::S2;
    if r.linearly_full {
        out.push(verdict("index_ratio", "ind_S >= ind_E/(n+1)", q(is), Q::new(ie, n + 1), ">="));
        if sphere {
            out.push(verdict("energy_vs_spectral", "ind_E >= 2(m-1) ind_S", q(ie), q(2 * (m - 1) * is), ">="));
        }
        out.push(verdict(
            "index_nullity",
            "ind_S >= (ind_E + nul_E - m(2m+1))/(2m+1)",
            q(is),
            Q::new(ie + ne - m * (2 * m + 1), 2 * m + 1),
            ">=",
        ));
        if sphere {
            out.push(verdict("energy_nullity", "nul_E >= 4d + 2m^2", q(ne), q(4 * d + 2 * m * m), ">="));
        }
    }
    if sphere {
        out.push(verdict("spectral_index_vs_degree", "ind_S >= 2d - nul_S + 2", q(is), q(2 * d - ns + 2), ">="));
        out.push(verdict("kotani_nullity", "d >= (nul_S^2 - 1)/8", q(d), Q::new(ns * ns - 1, 8), ">="));
    } else {
        out.push(verdict("rp2_degree_index", "ind_S >= (d - 1)/2", q(is), Q::new(d - 1, 2), ">="));
    }
    if let (false, Some(inner)) = (r.linearly_full, r.inner_ind_e) {
        let k = 2 * m;
        out.push(verdict(
            "subsphere_decomposition",
            "ind_E = (n - k) ind_S + ind_E(inner)",
            q(ie),
            q((n - k) * is + inner as i64),
            "=",
        ));
    }
    out
}

/// Compute a complete report for a map on S² or RP².
pub fn index_report(map: &HarmonicMap, mesh: &SphereMesh, surface: Surface, opts: &IndexOptions) -> Result<IndexReport> {
    if surface == Surface::RP2 {
        require_even(map)?;
    }
    let d = degree(map, mesh)?;
    let mut flags = Vec::new();
    let (spec, energy, halving) = match surface {
        Surface::S2 => (spectral_index(map, mesh, opts)?, energy_index(map, mesh, d, opts)?, None),
        Surface::RP2 => {
            let s = rp2_spectral_index(map, mesh, opts)?;
            let e = rp2_energy_index(map, mesh, d, opts)?;
            if !e.halving_holds {
                flags.push("rp2 halving law violated".to_string());
            }
            if !e.odd.stable || !e.full.stable {
                flags.push("rp2 cover count unstable".to_string());
            }
            (s, e.even, Some(e.halving_holds))
        }
    };
    if !spec.stable {
        flags.push("spectral count unstable under guard scaling".into());
    }
    if !energy.stable {
        flags.push("energy count unstable under guard scaling".into());
    }
    let inner_ind_e = match map {
        HarmonicMap::Padded { inner, .. } => Some(energy_index(inner, mesh, d, opts)?.index),
        _ => None,
    };
    let mut report = IndexReport {
        map: map.descriptor(),
        surface,
        mesh_level: mesh.level,
        m: map.m(),
        n: map.ambient_dim() - 1,
        d,
        linearly_full: map.linearly_full(),
        ind_s: spec.index,
        nul_s: spec.nullity,
        ind_e: energy.index,
        nul_e: energy.nullity,
        stable: flags.is_empty(),
        stability_flags: flags,
        spectral_guard: spec.guard,
        energy_guard: energy.guard,
        inner_ind_e,
        halving_holds: halving,
        inequalities: vec![],
    };
    report.inequalities = verify_inequalities(&report);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{veronese, RationalMap};
    use crate::mesh::icosphere;

    #[test]
    fn householder_frames_are_orthonormal_complements() {
        for v in [vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.6, 0.0, 0.8], vec![-0.2, 0.4, -0.4, 0.8]] {
            let f = householder_frame(&v);
            let g = f.transpose() * &f;
            assert!((g - DMatrix::identity(v.len() - 1, v.len() - 1)).amax() < 1e-15);
            let dots = f.transpose() * nalgebra::DVector::from_column_slice(&v);
            assert!(dots.amax() < 1e-15);
        }
    }

    #[test]
    fn round_sphere_identity_counts() {
        let mesh = icosphere(3).unwrap();
        let map = HarmonicMap::Rational(RationalMap::identity());
        let s = spectral_index(&map, &mesh, &IndexOptions::default()).unwrap();
        assert_eq!((s.index, s.nullity), (1, 3));
        let e = energy_index(&map, &mesh, 1, &IndexOptions::default()).unwrap();
        assert_eq!((e.index, e.nullity), (0, 6));
    }

    #[test]
    fn jacobi_fields_satisfy_constraint() {
        let mesh = icosphere(2).unwrap();
        let map = HarmonicMap::Polynomial(veronese(2).unwrap());
        let p = JacobiPencil::new(&map, &mesh).unwrap();
        assert_eq!(p.dim(), 4 * mesh.num_vertices());
        let v: Vec<f64> = (0..p.dim()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let field = p.reconstruct(&v);
        for (x, f) in mesh.vertices.iter().zip(&field) {
            let phi = map.value(x);
            let dot: f64 = phi.iter().zip(f).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-12);
        }
        let back = p.restrict_field(&field);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn fabricated_report_fails_index_ratio() {
        let r = IndexReport {
            map: "fabricated".into(),
            surface: Surface::S2,
            mesh_level: 0,
            m: 1,
            n: 2,
            d: 1,
            linearly_full: true,
            ind_s: 1,
            nul_s: 3,
            ind_e: 100,
            nul_e: 6,
            stable: true,
            stability_flags: vec![],
            spectral_guard: 0.1,
            energy_guard: 0.1,
            inner_ind_e: None,
            halving_holds: None,
            inequalities: vec![],
        };
        let v = verify_inequalities(&r);
        let ratio = v.iter().find(|v| v.name == "index_ratio").unwrap();
        assert!(!ratio.pass);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn odd_map_rejected_on_rp2() {
        let mesh = icosphere(1).unwrap();
        let map = HarmonicMap::Polynomial(veronese(3).unwrap());
        assert!(matches!(rp2_spectral_index(&map, &mesh, &IndexOptions::default()), Err(Error::Validation(_))));
    }
}
