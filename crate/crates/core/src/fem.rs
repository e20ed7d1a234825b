//! Piecewise-linear finite elements on sphere meshes: the cotangent
//! (Dirichlet) form and conformally weighted mass forms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SphereMesh;
use crate::sparse::CsrMatrix;

/// Domain surface: the sphere itself or its antipodal quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Surface {
    #[serde(rename = "S2")]
    S2,
    #[serde(rename = "RP2")]
    RP2,
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Surface::S2 => "S2",
            Surface::RP2 => "RP2",
        })
    }
}

impl FromStr for Surface {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s2" | "sphere" => Ok(Surface::S2),
            "rp2" | "projective" => Ok(Surface::RP2),
            other => Err(Error::Config(format!("unknown surface '{other}' (expected s2 or rp2)"))),
        }
    }
}

/// Relative clamp applied to densities at assembly.
pub const DENSITY_FLOOR_FACTOR: f64 = 1e-10;

/// Per-vertex conformal weight ρ ≥ 0 of the metric ρ·g_round.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub values: Vec<f64>,
    /// Clamp ε_ρ used at assembly: 1e-10 × mean density (1e-10 for the zero density).
    pub floor: f64,
}

impl Density {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("density at vertex {i} is {v}; densities must be finite and ≥ 0")));
        }
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
        let floor = if mean > 0.0 { DENSITY_FLOOR_FACTOR * mean } else { DENSITY_FLOOR_FACTOR };
        Ok(Density { values, floor })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values after the clamp.
    pub fn clamped(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v.max(self.floor)).collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }
}

/// Sparse symmetric matrix of a quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricForm {
    matrix: CsrMatrix,
}

impl SymmetricForm {
    /// Wrap a matrix whose stored coefficients are exactly symmetric.
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        let defect = matrix.symmetry_defect();
        if defect != 0.0 {
            return Err(Error::Validation(format!("form is not exactly symmetric (defect {defect:e})")));
        }
        Ok(SymmetricForm { matrix })
    }

    pub fn identity(n: usize) -> Self {
        SymmetricForm { matrix: CsrMatrix::identity(n) }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        SymmetricForm { matrix: CsrMatrix::diagonal(d) }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matrix.bilinear(x, x)
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matrix.bilinear(x, y)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.matrix.n).all(|r| self.matrix.row(r).all(|(c, v)| c == r || v == 0.0))
    }

    pub fn to_matrix_market(&self) -> String {
        self.matrix.to_matrix_market()
    }
}

fn triangle_geometry(mesh: &SphereMesh, t: usize) -> Result<f64> {
    let [a, b, c] = mesh.triangles[t];
    let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    let area = 0.5 * (pb - pa).cross(&(pc - pa)).norm();
    if !(area >= 1e-16) {
        return Err(Error::DegenerateTriangle { index: t, area });
    }
    Ok(area)
}

/// Cotangent stiffness form of the piecewise-linear Dirichlet energy.
///
/// The Dirichlet energy of a surface is conformally invariant, so this form
/// takes no density: the same matrix serves every metric ρ·g_round.
pub fn assemble_stiffness(mesh: &SphereMesh) -> Result<SymmetricForm> {
    let n = mesh.vertices.len();
    let mut off = Vec::with_capacity(mesh.triangles.len() * 6);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = triangle_geometry(mesh, t)?;
        for k in 0..3 {
            let (i, j, o) = (tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]);
            let (ei, ej) = (mesh.vertices[i] - mesh.vertices[o], mesh.vertices[j] - mesh.vertices[o]);
            let cot = ei.dot(&ej) / (2.0 * area);
            let w = -0.5 * cot;
            off.push((i.min(j), i.max(j), w));
        }
    }
    // accumulate each edge once, then mirror, so symmetry is exact
    let upper = CsrMatrix::from_triplets(n, &off);
    let mut trip = Vec::with_capacity(2 * upper.nnz() + n);
    let mut diag = vec![0.0; n];
    for r in 0..n {
        for (c, v) in upper.row(r) {
            trip.push((r, c, v));
            trip.push((c, r, v));
            diag[r] -= v;
            diag[c] -= v;
        }
    }
    trip.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    SymmetricForm::new(CsrMatrix::from_triplets(n, &trip))
}

/// Barycentric vertex areas (one third of each incident flat triangle).
pub fn vertex_areas(mesh: &SphereMesh) -> Result<Vec<f64>> {
    let mut areas = vec![0.0; mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = triangle_geometry(mesh, t)? / 3.0;
        for &v in tri {
            areas[v] += a;
        }
    }
    Ok(areas)
}

/// Mass discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassKind {
    /// Diagonal ρᵢ·aᵢ (default).
    #[default]
    Lumped,
    /// Full P1 mass with the density averaged per triangle.
    Consistent,
}

/// Treatment of vertices where the density vanishes (branch points).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConicalTreatment {
    /// Raise the density to the floor ε_ρ (default).
    #[default]
    Clamp,
    /// Drop the mass of triangles touching a vanishing vertex, then clamp.
    DeleteElements,
}

/// Options of the mass assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MassOptions {
    pub kind: MassKind,
    pub conical: ConicalTreatment,
}

/// Lumped conformal mass form diag(ρᵢ·aᵢ).
pub fn assemble_mass(mesh: &SphereMesh, density: &Density) -> Result<SymmetricForm> {
    assemble_mass_with(mesh, density, MassOptions::default())
}

pub fn assemble_mass_with(mesh: &SphereMesh, density: &Density, options: MassOptions) -> Result<SymmetricForm> {
    let n = mesh.vertices.len();
    if density.len() != n {
        return Err(Error::Validation(format!("density has {} values for {n} vertices", density.len())));
    }
    let rho = density.clamped();
    let vanishing: Vec<bool> = density.values.iter().map(|&v| v < density.floor).collect();
    let mut trip = Vec::new();
    let mut diag = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = triangle_geometry(mesh, t)?;
        if options.conical == ConicalTreatment::DeleteElements && tri.iter().any(|&v| vanishing[v]) {
            continue;
        }
        match options.kind {
            MassKind::Lumped => {
                for &v in tri {
                    diag[v] += rho[v] * area / 3.0;
                }
            }
            MassKind::Consistent => {
                let mean = (rho[tri[0]] + rho[tri[1]] + rho[tri[2]]) / 3.0;
                for &i in tri {
                    for &j in tri {
                        let w = if i == j { 2.0 } else { 1.0 };
                        trip.push((i, j, mean * area * w / 12.0));
                    }
                }
            }
        }
    }
    if options.kind == MassKind::Lumped || options.conical == ConicalTreatment::DeleteElements {
        // every vertex keeps at least the clamped share of its own area
        let areas = vertex_areas(mesh)?;
        for i in 0..n {
            let minimum = density.floor * areas[i];
            if options.kind == MassKind::Lumped {
                diag[i] = diag[i].max(minimum);
            } else {
                trip.push((i, i, minimum));
            }
        }
    }
    if options.kind == MassKind::Lumped {
        return Ok(SymmetricForm::diagonal(&diag));
    }
    // symmetrise exactly: average the two accumulated copies of each entry
    let m = CsrMatrix::from_triplets(n, &trip);
    let mut sym = Vec::with_capacity(m.nnz());
    for r in 0..n {
        for (c, v) in m.row(r) {
            if c >= r {
                let w = 0.5 * (v + m.get(c, r));
                sym.push((r, c, w));
                if c != r {
                    sym.push((c, r, w));
                }
            }
        }
    }
    SymmetricForm::new(CsrMatrix::from_triplets(n, &sym))
}

/// Total area Σ ρᵢ·aᵢ of the metric ρ·g_round (clamped density, as in the mass form).
pub fn area(mesh: &SphereMesh, density: &Density) -> Result<f64> {
    let areas = vertex_areas(mesh)?;
    if density.len() != areas.len() {
        return Err(Error::Validation("density length does not match the mesh".into()));
    }
    Ok(density.clamped().iter().zip(&areas).map(|(r, a)| r * a).sum())
}

/// Area on the given surface: the RP² quotient carries half the cover's area.
pub fn area_on(mesh: &SphereMesh, density: &Density, surface: Surface) -> Result<f64> {
    let a = area(mesh, density)?;
    Ok(match surface {
        Surface::S2 => a,
        Surface::RP2 => a / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;
    use std::f64::consts::PI;

    #[test]
    fn stiffness_rows_sum_to_zero_and_is_symmetric() {
        let mesh = icosphere(3).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let r = k.mul_vec(&ones);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(k.matrix().symmetry_defect(), 0.0);
    }

    #[test]
    fn first_harmonic_dirichlet_energy() {
        let mesh = icosphere(4).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let x: Vec<f64> = mesh.vertices.iter().map(|v| v.x).collect();
        let e = k.quad_form(&x);
        let exact = 2.0 * 4.0 * PI / 3.0;
        assert!((e - exact).abs() / exact < 1e-2, "{e} vs {exact}");
    }

    #[test]
    fn mass_traces() {
        let mesh = icosphere(4).unwrap();
        let n = mesh.num_vertices();
        let m1 = assemble_mass(&mesh, &Density::constant(n, 1.0).unwrap()).unwrap();
        assert!((m1.trace() - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        let m3 = assemble_mass(&mesh, &Density::constant(n, 3.0).unwrap()).unwrap();
        assert!((m3.trace() - 12.0 * PI).abs() / (12.0 * PI) < 5e-3);
        let zero = Density::constant(n, 0.0).unwrap();
        let m0 = assemble_mass(&mesh, &zero).unwrap();
        assert!((m0.trace() / (zero.floor * 4.0 * PI) - 1.0).abs() < 5e-3);
        assert!(m0.matrix().diag().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn negative_density_is_rejected() {
        assert!(matches!(Density::new(vec![1.0, -0.5]), Err(Error::Validation(_))));
    }

    #[test]
    fn consistent_mass_has_same_total() {
        let mesh = icosphere(2).unwrap();
        let n = mesh.num_vertices();
        let d = Density::new((0..n).map(|i| 1.0 + (i % 5) as f64).collect()).unwrap();
        let opts = MassOptions { kind: MassKind::Consistent, ..Default::default() };
        let mc = assemble_mass_with(&mesh, &d, opts).unwrap();
        let ones = vec![1.0; n];
        let total_c = mc.quad_form(&ones);
        let total_l: f64 = area(&mesh, &d).unwrap();
        assert!((total_c - total_l).abs() / total_l < 0.05);
    }

    #[test]
    fn rp2_area_is_half() {
        let mesh = icosphere(4).unwrap();
        let d = Density::constant(mesh.num_vertices(), 1.0).unwrap();
        let a = area_on(&mesh, &d, Surface::RP2).unwrap();
        assert!((a - 2.0 * PI).abs() / (2.0 * PI) < 5e-3);
    }

    #[test]
    fn surface_parsing() {
        assert_eq!("s2".parse::<Surface>().unwrap(), Surface::S2);
        assert_eq!("RP2".parse::<Surface>().unwrap(), Surface::RP2);
        assert!("torus".parse::<Surface>().is_err());
    }
}
