//! Triangulated unit spheres with optional antipodal involution, and
//! stereographic charts used for pointwise derivative checks.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Largest supported icosphere subdivision level.
pub const MAX_ICOSPHERE_LEVEL: usize = 8;

/// How a mesh was produced; recorded for provenance.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshKind {
    /// Midpoint-subdivided icosahedron.
    Icosphere,
    /// Log-polar grid around an axis, graded towards both poles of the axis.
    Graded(GradedSpec),
}

/// A triangulated unit sphere.
#[derive(Debug, Clone)]
pub struct SphereMesh {
    pub vertices: Vec<Vec3>,
    /// Vertex index triples, counterclockwise seen from outside.
    pub triangles: Vec<[usize; 3]>,
    /// Subdivision depth (icospheres) or number of angular columns (graded meshes).
    pub level: usize,
    /// Vertex involution realising x ↦ −x, when the mesh is centrally symmetric.
    pub antipodal: Option<Vec<usize>>,
    pub kind: MeshKind,
}

/// Midpoint-subdivided icosahedron projected to the unit sphere.
pub fn icosphere(level: usize) -> Result<SphereMesh> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(Error::Config(format!(
            "icosphere level {level} outside 0..={MAX_ICOSPHERE_LEVEL}"
        )));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut vertices: Vec<Vec3> = raw.iter().map(|p| Vec3::new(p[0], p[1], p[2]).normalize()).collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    let mut mesh = SphereMesh { vertices, triangles, level, antipodal: None, kind: MeshKind::Icosphere };
    mesh.antipodal = Some(match_antipodes(&mesh.vertices, 1e-10)?);
    mesh.check_antipodal()?;
    Ok(mesh)
}

/// Parameters of a log-polar sphere grid.
///
/// Rows sit at log-radius `t` of the stereographic coordinate `z = e^{t+iθ}` of
/// the chart centred at `center`; `t → −∞` approaches `center` and `t → +∞`
/// approaches `−center`. Equal steps in `(t, θ)` are conformally equal, so
/// the grid resolves features of every scale `e^t` equally well.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedSpec {
    pub center: Vec3,
    pub n_theta: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl GradedSpec {
    /// Grid resolving a bubble of scale `eps` at `center`, plus `margin` extra
    /// log-radius on both ends; symmetric grids also resolve one at `−center`.
    pub fn for_scale(center: Vec3, eps: f64, n_theta: usize, margin: f64, symmetric: bool) -> Self {
        let t_min = eps.ln() - margin;
        let t_max = if symmetric { -t_min } else { margin };
        GradedSpec { center, n_theta, t_min, t_max }
    }
}

/// Log-polar sphere mesh: a triangulated cylinder in `(t, θ)` with two fan caps.
///
/// Alternate rows are offset by half a column and the row spacing is
/// `√3/2` of the column spacing, so the grid triangles are equilateral in the
/// flat cylinder metric, which is conformal to the round one.
/// When `t_min = −t_max` and `n_theta` is even the mesh is centrally symmetric
/// and carries an exact antipodal involution.
pub fn graded_sphere(spec: &GradedSpec) -> Result<SphereMesh> {
    let n_theta = spec.n_theta;
    if n_theta < 6 {
        return Err(Error::Config(format!("graded mesh needs at least 6 columns, got {n_theta}")));
    }
    if !(spec.t_max > spec.t_min) || !spec.t_min.is_finite() || !spec.t_max.is_finite() {
        return Err(Error::Config("graded mesh needs finite t_min < t_max".into()));
    }
    if (spec.center.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Config("graded mesh center must be a unit vector".into()));
    }
    let chart = Chart::new(spec.center);
    let d_theta = std::f64::consts::TAU / n_theta as f64;
    let dt = d_theta * 3f64.sqrt() / 2.0;
    let mut rows = ((spec.t_max - spec.t_min) / dt).ceil() as usize + 1;
    if rows % 2 == 0 {
        rows += 1;
    }
    let symmetric = (spec.t_min + spec.t_max).abs() < 1e-12 && n_theta % 2 == 0;
    let t_at = |j: usize| spec.t_min + (spec.t_max - spec.t_min) * j as f64 / (rows - 1) as f64;
    let idx = |j: usize, i: usize| j * n_theta + (i % n_theta);

    let mut vertices = vec![Vec3::zeros(); rows * n_theta];
    for j in 0..rows {
        let mirror = rows - 1 - j;
        if symmetric && j > mirror {
            // exact central symmetry: copy the antipodes of the mirrored row
            for i in 0..n_theta {
                vertices[idx(j, i)] = -vertices[idx(mirror, i + n_theta / 2)];
            }
            continue;
        }
        let t = t_at(j);
        let offset = if j % 2 == 1 { 0.5 } else { 0.0 };
        let (ch, th) = (t.cosh(), t.tanh());
        for i in 0..n_theta {
            let theta = (i as f64 + offset) * d_theta;
            let y = Vec3::new(theta.cos() / ch, theta.sin() / ch, th).normalize();
            vertices[idx(j, i)] = chart.rotation.transpose() * y;
        }
    }
    let mut triangles = Vec::with_capacity(2 * rows * n_theta);
    for j in 0..rows - 1 {
        for i in 0..n_theta {
            if j % 2 == 0 {
                triangles.push([idx(j, i), idx(j, i + 1), idx(j + 1, i)]);
                triangles.push([idx(j, i + 1), idx(j + 1, i + 1), idx(j + 1, i)]);
            } else {
                triangles.push([idx(j, i), idx(j + 1, i + 1), idx(j + 1, i)]);
                triangles.push([idx(j, i), idx(j, i + 1), idx(j + 1, i + 1)]);
            }
        }
    }
    let near_pole = vertices.len();
    vertices.push(spec.center);
    let far_pole = vertices.len();
    vertices.push(-spec.center);
    for i in 0..n_theta {
        triangles.push([near_pole, idx(0, i + 1), idx(0, i)]);
        triangles.push([far_pole, idx(rows - 1, i), idx(rows - 1, i + 1)]);
    }
    // orient every triangle counterclockwise from outside
    for tri in triangles.iter_mut() {
        let [a, b, c] = *tri;
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        if (pb - pa).cross(&(pc - pa)).dot(&(pa + pb + pc)) < 0.0 {
            tri.swap(1, 2);
        }
    }
    let mut mesh = SphereMesh {
        vertices,
        triangles,
        level: n_theta,
        antipodal: None,
        kind: MeshKind::Graded(spec.clone()),
    };
    if symmetric {
        let mut sigma = vec![0usize; mesh.vertices.len()];
        for j in 0..rows {
            for i in 0..n_theta {
                sigma[idx(j, i)] = idx(rows - 1 - j, i + n_theta / 2);
            }
        }
        sigma[near_pole] = far_pole;
        sigma[far_pole] = near_pole;
        mesh.antipodal = Some(sigma);
        mesh.check_antipodal()?;
    }
    Ok(mesh)
}

/// Pair every vertex with the vertex at its antipode (nearest match within `tol`).
fn match_antipodes(vertices: &[Vec3], tol: f64) -> Result<Vec<usize>> {
    let cell = 1e-3;
    let key = |p: &Vec3| -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    };
    let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        buckets.entry(key(v)).or_default().push(i);
    }
    let mut sigma = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let target = -v;
        let (kx, ky, kz) = key(&target);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in list {
                            let dist = (vertices[j] - target).norm();
                            if best.map_or(true, |(bd, _)| dist < bd) {
                                best = Some((dist, j));
                            }
                        }
                    }
                }
            }
        }
        match best {
            Some((dist, j)) if dist <= tol => sigma.push(j),
            _ => {
                return Err(Error::Validation(format!("vertex {i} has no antipodal partner within {tol:e}")))
            }
        }
    }
    Ok(sigma)
}

impl SphereMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set: HashSet<(usize, usize)> = HashSet::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                set.insert(if a < b { (a, b) } else { (b, a) });
            }
        }
        let mut edges: Vec<_> = set.into_iter().collect();
        edges.sort_unstable();
        edges
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    /// True when every edge borders exactly two triangles, traversed in opposite directions.
    pub fn is_manifold(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.triangles.len() * 3);
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Largest deviation of a vertex norm from 1.
    pub fn max_norm_error(&self) -> f64 {
        self.vertices.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Check the antipodal involution: fixed-point free, squares to the
    /// identity, matches −x, and maps triangles to reversed triangles.
    pub fn check_antipodal(&self) -> Result<()> {
        let sigma = self
            .antipodal
            .as_ref()
            .ok_or_else(|| Error::Validation("mesh has no antipodal involution".into()))?;
        if sigma.len() != self.vertices.len() {
            return Err(Error::Validation("antipodal map has wrong length".into()));
        }
        for (i, &j) in sigma.iter().enumerate() {
            if j == i {
                return Err(Error::Validation(format!("antipodal map fixes vertex {i}")));
            }
            if sigma[j] != i {
                return Err(Error::Validation(format!("antipodal map is not an involution at {i}")));
            }
            if (self.vertices[j] + self.vertices[i]).norm() > 1e-14 {
                return Err(Error::Validation(format!("vertex {j} is not the antipode of {i}")));
            }
        }
        let oriented: HashSet<[usize; 3]> = self.triangles.iter().map(|t| canonical_rotation(*t)).collect();
        for t in &self.triangles {
            let image = canonical_rotation([sigma[t[0]], sigma[t[2]], sigma[t[1]]]);
            if !oriented.contains(&image) {
                return Err(Error::Validation(format!("triangle {t:?} has no reversed antipodal image")));
            }
        }
        Ok(())
    }

    /// Representatives of the antipodal orbits: `orbit[i]` is the orbit index of
    /// vertex i, and the returned count is the number of orbits.
    pub fn antipodal_orbits(&self) -> Result<(Vec<usize>, usize)> {
        let sigma = self
            .antipodal
            .as_ref()
            .ok_or_else(|| Error::Validation("RP2 computations need a mesh with an antipodal involution".into()))?;
        let mut orbit = vec![usize::MAX; sigma.len()];
        let mut count = 0;
        for i in 0..sigma.len() {
            if orbit[i] == usize::MAX {
                orbit[i] = count;
                orbit[sigma[i]] = count;
                count += 1;
            }
        }
        Ok((orbit, count))
    }

    /// Mesh in OFF format.
    pub fn to_off(&self) -> String {
        let mut out = String::with_capacity(64 * (self.vertices.len() + self.triangles.len()));
        out.push_str("OFF\n");
        let _ = writeln!(out, "{} {} {}", self.vertices.len(), self.triangles.len(), self.edges().len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

fn canonical_rotation(t: [usize; 3]) -> [usize; 3] {
    let k = (0..3).min_by_key(|&k| t[k]).unwrap();
    [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
}

/// Stereographic chart centred at a point of the sphere.
///
/// A proper rotation R takes `center` to the south pole, then the sphere is
/// projected from the north pole: `z = (y₁ + i y₂)/(1 − y₃)` with `y = R x`.
/// Every chart is the composition of a rotation with the same projection, so
/// all charts induce the same orientation and holomorphic structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub center: Vec3,
    pub rotation: Matrix3<f64>,
}

impl Chart {
    pub fn new(center: Vec3) -> Self {
        let c = center.normalize();
        let south = Vec3::new(0.0, 0.0, -1.0);
        let axis = c.cross(&south);
        let s = axis.norm();
        let cos = c.dot(&south);
        let rotation = if s < 1e-15 {
            if cos > 0.0 {
                Matrix3::identity()
            } else {
                // half turn about the x axis swaps the poles
                Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
            }
        } else {
            let k = axis / s;
            let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
            Matrix3::identity() + kx * s + kx * kx * (1.0 - cos)
        };
        Chart { center: c, rotation }
    }

    /// Preimage of the chart coordinate z on the unit sphere.
    pub fn to_sphere(&self, z: Complex64) -> Vec3 {
        let r2 = z.norm_sqr();
        let y = Vec3::new(2.0 * z.re, 2.0 * z.im, r2 - 1.0) / (1.0 + r2);
        self.rotation.transpose() * y
    }

    /// Chart coordinate of x (infinite at the projection point −center).
    pub fn from_sphere(&self, x: &Vec3) -> Complex64 {
        let y = self.rotation * x;
        Complex64::new(y.x, y.y) / (1.0 - y.z)
    }

    /// Round-metric conformal factor λ(z) in g = λ|dz|².
    pub fn conformal_factor(z: Complex64) -> f64 {
        4.0 / (1.0 + z.norm_sqr()).powi(2)
    }
}

/// Square grid of stereographic sample coordinates around a chart centre.
#[derive(Debug, Clone)]
pub struct ChartGrid {
    pub chart: Chart,
    /// Half-width of the square sampling window.
    pub radius: f64,
    pub n: usize,
    /// Grid spacing 2·radius/(n − 1).
    pub spacing: f64,
    /// Row-major samples; the centre sample is z = 0 when n is odd.
    pub points: Vec<Complex64>,
}

impl ChartGrid {
    pub fn center(&self) -> Vec3 {
        self.chart.center
    }

    /// Index of the sample closest to z = 0.
    pub fn center_index(&self) -> usize {
        (0..self.points.len())
            .min_by(|&a, &b| self.points[a].norm().total_cmp(&self.points[b].norm()))
            .unwrap_or(0)
    }

    /// Samples at least `margin` grid steps away from the window boundary.
    pub fn interior_indices(&self, margin: usize) -> Vec<usize> {
        let n = self.n;
        let mut out = Vec::new();
        for r in margin..n.saturating_sub(margin) {
            for c in margin..n.saturating_sub(margin) {
                out.push(r * n + c);
            }
        }
        out
    }
}

/// n×n grid with spacing 2·radius/(n−1) centred at the chart origin.
pub fn chart_grid(center: Vec3, radius: f64, n: usize) -> Result<ChartGrid> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Validation(format!("chart radius must be positive, got {radius}")));
    }
    if n < 3 {
        return Err(Error::Validation(format!("chart grid needs n ≥ 3, got {n}")));
    }
    if (center.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Validation("chart center must be a unit vector".into()));
    }
    let spacing = 2.0 * radius / (n - 1) as f64;
    let mut points = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            points.push(Complex64::new(-radius + c as f64 * spacing, -radius + r as f64 * spacing));
        }
    }
    Ok(ChartGrid { chart: Chart::new(center), radius, n, spacing, points })
}
