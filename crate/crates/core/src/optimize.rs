//! Normalised eigenvalues λ̄_k = λ_k·Area of conformal metrics ρ·g_round,
//! the bubbling families that approach the supremum of λ̄_k, and a projected
//! ascent on log-densities.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eigensolve::{solve_lowest_with, SolverOptions, SpectrumResult};
use crate::error::{Error, Result};
use crate::fem::{area_on, assemble_mass, assemble_stiffness, vertex_areas, Density, Surface, SymmetricForm};
use crate::index::{sector_form, sector_lift, Sector};
use crate::maps::spherical_harmonic_basis;
use crate::mesh::{graded_sphere, Chart, GradedSpec, SphereMesh, Vec3};

/// Extra log-radius resolved beyond a bubble's scale on graded meshes.
pub const BUBBLE_MARGIN: f64 = 6.0;
/// Angular columns of the graded meshes used by [`limit_family`].
pub const FAMILY_COLUMNS: usize = 64;
/// Largest bubble scale accepted.
pub const MAX_BUBBLE_SCALE: f64 = 0.5;
/// Relative mismatch between a bubble's mesh integral and its target area
/// beyond which the mesh is declared not to resolve it.
pub const BUBBLE_AREA_TOL: f64 = 0.05;

/// A round bubble: the pullback of a round sphere of area `target_area`
/// concentrated at `center` at scale `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub center: [f64; 3],
    pub target_area: f64,
    pub eps: f64,
}

impl BubbleSpec {
    pub fn new(center: Vec3, target_area: f64, eps: f64) -> Self {
        let c = center.normalize();
        BubbleSpec { center: [c.x, c.y, c.z], target_area, eps }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    /// Density of the bubble relative to the round metric at x:
    /// (A/π)·ε²/(ε² + |z|²)² in the stereographic chart at the centre, times
    /// (1 + |z|²)²/4 to convert from |dz|² to the round metric.
    pub fn density_at(&self, x: &Vec3) -> f64 {
        let z = Chart::new(self.center()).from_sphere(x).norm_sqr();
        if !z.is_finite() {
            return 0.0;
        }
        let e2 = self.eps * self.eps;
        // ε²(1+|z|²)²/(ε²+|z|²)² stays bounded as |z| → ∞
        let ratio = (1.0 + z) / (e2 + z);
        self.target_area / (4.0 * PI) * e2 * ratio * ratio
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= MAX_BUBBLE_SCALE) {
            return Err(Error::Validation(format!("bubble scale {} outside (0, {MAX_BUBBLE_SCALE}]", self.eps)));
        }
        if !(self.target_area > 0.0 && self.target_area.is_finite()) {
            return Err(Error::Validation(format!("bubble area {} must be positive", self.target_area)));
        }
        if (Vec3::from(self.center).norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("bubble centre must be a unit vector".into()));
        }
        Ok(())
    }
}

/// Base density plus the given bubbles; each bubble's mesh integral must be
/// within [`BUBBLE_AREA_TOL`] of its target area.
pub fn bubble_density(mesh: &SphereMesh, base: &Density, specs: &[BubbleSpec]) -> Result<Density> {
    if base.len() != mesh.num_vertices() {
        return Err(Error::Validation("base density does not match the mesh".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let max_eps = specs.iter().map(|s| s.eps).fold(0.0, f64::max);
    for (i, a) in specs.iter().enumerate() {
        for b in &specs[i + 1..] {
            let angle = a.center().dot(&b.center()).clamp(-1.0, 1.0).acos();
            if angle <= 4.0 * max_eps {
                return Err(Error::Validation(format!(
                    "bubble centres {:.3} rad apart overlap at scale {max_eps}",
                    angle
                )));
            }
        }
    }
    let areas = vertex_areas(mesh)?;
    let mut values = base.values.clone();
    for s in specs {
        let bubble: Vec<f64> = mesh.vertices.iter().map(|x| s.density_at(x)).collect();
        let integral: f64 = bubble.iter().zip(&areas).map(|(r, a)| r * a).sum();
        if ((integral - s.target_area) / s.target_area).abs() > BUBBLE_AREA_TOL {
            return Err(Error::Numerical(format!(
                "mesh integrates the bubble at scale {} to {integral:.4} instead of {:.4}: refine the mesh near its centre",
                s.eps, s.target_area
            )));
        }
        for (v, b) in values.iter_mut().zip(bubble) {
            *v += b;
        }
    }
    Density::new(values)
}

/// λ_k, the area and λ̄_k = λ_k·Area of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBar {
    pub lambda_k: f64,
    pub area: f64,
    pub lambda_bar: f64,
}

fn sector_of(surface: Surface) -> Sector {
    match surface {
        Surface::S2 => Sector::Full,
        Surface::RP2 => Sector::Even,
    }
}

/// Stiffness and mass of the metric, restricted to σ-even functions on RP².
fn pencil(mesh: &SphereMesh, stiffness: &SymmetricForm, density: &Density, surface: Surface) -> Result<(SymmetricForm, SymmetricForm)> {
    let sector = sector_of(surface);
    let m = assemble_mass(mesh, density)?;
    Ok((sector_form(stiffness, mesh, sector)?, sector_form(&m, mesh, sector)?))
}

fn lowest(k: &SymmetricForm, m: &SymmetricForm, count: usize) -> Result<SpectrumResult> {
    let opts = SolverOptions { tol: 1e-10, lower_bound: Some(0.0), ..Default::default() };
    solve_lowest_with(k, m, count.min(k.dim()), &opts)
}

fn lambda_bar_with(mesh: &SphereMesh, stiffness: &SymmetricForm, density: &Density, k: usize, surface: Surface, extra: usize) -> Result<(LambdaBar, SpectrumResult)> {
    if k == 0 {
        return Err(Error::Validation("k must be ≥ 1".into()));
    }
    let (kk, mm) = pencil(mesh, stiffness, density, surface)?;
    if kk.dim() <= k {
        return Err(Error::InsufficientSpectrum { largest: f64::NAN, needed: k as f64 });
    }
    let spec = lowest(&kk, &mm, k + 1 + extra)?;
    let lambda_k = spec.eigenvalues[k];
    let area = area_on(mesh, density, surface)?;
    Ok((LambdaBar { lambda_k, area, lambda_bar: lambda_k * area }, spec))
}

/// λ̄_k of ρ·g_round on the sphere or (σ-even ρ) on the projective plane.
pub fn lambda_bar(mesh: &SphereMesh, density: &Density, k: usize, surface: Surface) -> Result<LambdaBar> {
    let stiffness = assemble_stiffness(mesh)?;
    lambda_bar_with(mesh, &stiffness, density, k, surface, 0).map(|x| x.0)
}

/// One member of a degenerating family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub eps: f64,
    pub lambda_k: f64,
    pub area: f64,
    pub lambda_bar: f64,
    pub vertices: usize,
}

/// Bubble configuration and graded mesh of one family member.
///
/// On S² the k − 1 bubbles carry the area 4π of the round base each, so all
/// k pieces have equal area. On RP² the single bubble (an antipodal pair on
/// the cover) has area 2u against the base area 3u, u = 2π/3.
pub fn family_member(surface: Surface, k: usize, eps: f64, n_theta: usize) -> Result<(SphereMesh, Density)> {
    let pole = Vec3::new(0.0, 0.0, -1.0);
    let (spec, bubbles) = match (surface, k) {
        (Surface::S2, 2) => (GradedSpec::for_scale(pole, eps, n_theta, BUBBLE_MARGIN, false), vec![BubbleSpec::new(pole, 4.0 * PI, eps)]),
        (Surface::S2, 3) => (
            GradedSpec::for_scale(pole, eps, n_theta, BUBBLE_MARGIN, true),
            vec![BubbleSpec::new(pole, 4.0 * PI, eps), BubbleSpec::new(-pole, 4.0 * PI, eps)],
        ),
        (Surface::RP2, 2) => {
            let u = 2.0 * PI / 3.0;
            // each cover bubble carries 2u, the pair 4u = twice the quotient bubble
            (
                GradedSpec::for_scale(pole, eps, n_theta, BUBBLE_MARGIN, true),
                vec![BubbleSpec::new(pole, 2.0 * u, eps), BubbleSpec::new(-pole, 2.0 * u, eps)],
            )
        }
        (_, k) if k < 2 => return Err(Error::Validation("degenerating families need k ≥ 2".into())),
        _ => {
            return Err(Error::Config(format!(
                "a graded mesh resolves bubbles at two antipodal points only: {surface} with k = {k} is not supported"
            )))
        }
    };
    let mesh = graded_sphere(&spec)?;
    let base = Density::constant(mesh.num_vertices(), 1.0)?;
    let density = bubble_density(&mesh, &base, &bubbles)?;
    Ok((mesh, density))
}

/// λ̄_k of one family member on its graded mesh.
pub fn family_point(surface: Surface, k: usize, eps: f64, n_theta: usize) -> Result<FamilyPoint> {
    let (mesh, density) = family_member(surface, k, eps, n_theta)?;
    let lb = lambda_bar(&mesh, &density, k, surface)?;
    Ok(FamilyPoint { eps, lambda_k: lb.lambda_k, area: lb.area, lambda_bar: lb.lambda_bar, vertices: mesh.num_vertices() })
}

/// λ̄_k along a bubbling family, one graded mesh per scale, members in parallel.
pub fn limit_family(surface: Surface, k: usize, eps_list: &[f64]) -> Result<Vec<FamilyPoint>> {
    limit_family_with(surface, k, eps_list, FAMILY_COLUMNS)
}

pub fn limit_family_with(surface: Surface, k: usize, eps_list: &[f64], n_theta: usize) -> Result<Vec<FamilyPoint>> {
    if eps_list.is_empty() {
        return Err(Error::Validation("empty list of scales".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation("scales must be strictly decreasing".into()));
    }
    let results: Vec<Result<FamilyPoint>> = std::thread::scope(|s| {
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&eps| {
                s.spawn(move || family_point(surface, k, eps, n_theta))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("family worker panicked".into())))).collect()
    });
    results.into_iter().collect()
}

/// Family table as CSV with header "epsilon,lambda_bar".
pub fn family_to_csv(points: &[FamilyPoint]) -> String {
    let mut out = String::from("epsilon,lambda_bar\n");
    for p in points {
        let _ = writeln!(out, "{:.6e},{:.10}", p.eps, p.lambda_bar);
    }
    out
}

/// Supremum of λ̄_k: 8πk on the sphere, 4π(2k+1) on the projective plane.
pub fn lambda_bar_ceiling(surface: Surface, k: usize) -> f64 {
    match surface {
        Surface::S2 => 8.0 * PI * k as f64,
        Surface::RP2 => 4.0 * PI * (2 * k + 1) as f64,
    }
}

// ---------------------------------------------------------------------------
// ascent

/// State of the log-density ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentState {
    pub log_density: Vec<f64>,
    pub iteration: usize,
    pub lambda_bar: f64,
    pub lambda_k: f64,
    pub area: f64,
    pub step: f64,
    /// Multiplicity of the cluster containing λ_k.
    pub cluster_size: usize,
}

impl AscentState {
    /// Unevaluated state from a log-density.
    pub fn from_log_density(log_density: Vec<f64>, step: f64) -> Self {
        AscentState { log_density, iteration: 0, lambda_bar: f64::NAN, lambda_k: f64::NAN, area: f64::NAN, step, cluster_size: 0 }
    }

    pub fn density(&self) -> Result<Density> {
        Density::new(self.log_density.iter().map(|l| l.exp()).collect())
    }
}

/// Smooth random log-density: `amplitude` times a random combination of
/// spherical harmonics of degrees 1–4 (even degrees only on RP², so the
/// density is σ-even).
pub fn random_start(mesh: &SphereMesh, surface: Surface, amplitude: f64, seed: u64) -> AscentState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degrees: Vec<usize> = match surface {
        Surface::S2 => vec![1, 2, 3, 4],
        Surface::RP2 => vec![2, 4],
    };
    let polys: Vec<(f64, crate::maps::Poly3)> = degrees
        .iter()
        .flat_map(|&l| spherical_harmonic_basis(l))
        .map(|p| (StandardNormal.sample(&mut rng), p))
        .collect();
    let raw: Vec<f64> = mesh.vertices.iter().map(|x| polys.iter().map(|(c, p)| c * p.eval(x)).sum()).collect();
    let scale = raw.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    AscentState::from_log_density(raw.iter().map(|v| amplitude * v / scale).collect(), 0.5)
}

/// Knobs of [`ascend`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub steps: usize,
    /// Relative gap under which eigenvalues count as one cluster.
    pub cluster_tol: f64,
    /// Largest log-density change per step.
    pub max_step: f64,
    /// Halvings tried per line search.
    pub halvings: usize,
    /// Stop once the step falls below this.
    pub min_step: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { steps: 60, cluster_tol: 5e-2, max_step: 1.0, halvings: 12, min_step: 1e-6 }
    }
}

/// Outcome of an ascent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentTrajectory {
    pub states: Vec<AscentState>,
    pub best: AscentState,
    /// Iterations at which the line search found no increase.
    pub line_search_failures: Vec<usize>,
}

impl AscentTrajectory {
    /// CSV with header "iter,lambda_k,area,lambda_bar,step".
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,lambda_k,area,lambda_bar,step\n");
        for s in &self.states {
            let _ = writeln!(out, "{},{:.10},{:.10},{:.10},{:.6e}", s.iteration, s.lambda_k, s.area, s.lambda_bar, s.step);
        }
        out
    }
}

struct Evaluation {
    lb: LambdaBar,
    /// λ̄-scaled eigenvalues of the cluster starting at λ_k.
    values: Vec<f64>,
    /// Per-vertex eigenfunctions of that cluster, mass-normalised on the cover.
    cluster: Vec<Vec<f64>>,
}

fn evaluate(mesh: &SphereMesh, stiffness: &SymmetricForm, log_density: &[f64], k: usize, surface: Surface, cluster_tol: f64) -> Result<Evaluation> {
    let density = Density::new(log_density.iter().map(|l| l.exp()).collect())?;
    let (lb, spec) = lambda_bar_with(mesh, stiffness, &density, k, surface, 6)?;
    let sector = sector_of(surface);
    let lk = lb.lambda_k;
    // indices ≥ k only: every one of them staying above a level keeps λ_k above it
    let members: Vec<usize> = (k..spec.eigenvalues.len()).filter(|&i| spec.eigenvalues[i] - lk <= cluster_tol * lk.abs()).collect();
    let cluster = members
        .iter()
        .map(|&i| sector_lift(&spec.eigenvector(i), mesh, sector))
        .collect::<Result<Vec<_>>>()?;
    let values = members.iter().map(|&i| spec.eigenvalues[i] * lb.area).collect();
    Ok(Evaluation { lb, values, cluster })
}

/// Minimiser over the spectraplex {X ⪰ 0, tr X = 1} of
/// tr(diag(offsets)·X) + radius·‖Σ X_ab h_ab‖_w, returning Σ X_ab h_ab.
///
/// This is the dual of maximising the smallest eigenvalue of
/// diag(offsets) + [⟨h_ab, s⟩_w] over ‖s‖_w ≤ radius; with zero offsets it
/// is the minimum-norm element of the generalised gradient. Solved by
/// Frank–Wolfe with a ternary line search.
fn spectraplex_direction(h: &[Vec<Vec<f64>>], w: &[f64], offsets: &[f64], radius: f64) -> Vec<f64> {
    let c = h.len();
    let n = h[0][0].len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum::<f64>();
    let combine = |x: &DMatrix<f64>| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for a in 0..c {
            for b in 0..c {
                if x[(a, b)] != 0.0 {
                    for (o, v) in out.iter_mut().zip(&h[a][b]) {
                        *o += x[(a, b)] * v;
                    }
                }
            }
        }
        out
    };
    let lin = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(offsets));
    let mut x = DMatrix::identity(c, c) / c as f64;
    let mut g = combine(&x);
    for _ in 0..300 {
        let gn = dot(&g, &g).sqrt();
        let grad = DMatrix::from_fn(c, c, |a, b| {
            let pull = if gn > 0.0 { radius * dot(&h[a][b], &g) / gn } else { 0.0 };
            lin[(a, b)] + pull
        });
        let eig = SymmetricEigen::new(grad);
        let (imin, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let v = eig.eigenvectors.column(imin).into_owned();
        let vertex = &v * v.transpose();
        let gv = combine(&vertex);
        let d: Vec<f64> = gv.iter().zip(&g).map(|(a, b)| a - b).collect();
        let (p, q, r2) = (dot(&g, &g), dot(&g, &d), dot(&d, &d));
        let dl = (&vertex - &x).component_mul(&lin).sum();
        let phi = |t: f64| t * dl + radius * (p + 2.0 * q * t + r2 * t * t).max(0.0).sqrt();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if phi(m1) <= phi(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let t = 0.5 * (lo + hi);
        if t <= 1e-12 || phi(t) >= phi(0.0) - 1e-15 * phi(0.0).abs().max(1e-300) {
            break;
        }
        x = &x * (1.0 - t) + vertex * t;
        for (gi, di) in g.iter_mut().zip(&d) {
            *gi += t * di;
        }
    }
    g
}

/// Trust-region ascent step in log-density of weighted norm `radius`
/// (weights ρᵢaᵢ, the metric's own L² norm at unit area).
fn ascent_step(mesh_areas: &[f64], log_density: &[f64], eval: &Evaluation, surface: Surface, radius: f64) -> Vec<f64> {
    let lambda = eval.lb.lambda_k;
    let rho: Vec<f64> = log_density.iter().map(|l| l.exp()).collect();
    let w: Vec<f64> = rho.iter().zip(mesh_areas).map(|(r, a)| r * a).collect();
    let cover_area: f64 = w.iter().sum();
    // derivative of the λ̄ matrix: F·λ(δ_ab − A u_a u_b), F = ½ on RP² (quotient area)
    let factor = if surface == Surface::RP2 { 0.5 } else { 1.0 };
    let u = &eval.cluster;
    let c = u.len();
    let h: Vec<Vec<Vec<f64>>> = (0..c)
        .map(|a| {
            (0..c)
                .map(|b| {
                    (0..rho.len())
                        .map(|i| factor * lambda * (if a == b { 1.0 } else { 0.0 } - cover_area * u[a][i] * u[b][i]))
                        .collect()
                })
                .collect()
        })
        .collect();
    let base = eval.values[0];
    let offsets: Vec<f64> = eval.values.iter().map(|v| v - base).collect();
    let g = spectraplex_direction(&h, &w, &offsets, radius);
    let norm = g.iter().zip(&w).map(|(x, z)| x * x * z).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return vec![0.0; g.len()];
    }
    g.iter().map(|x| radius * x / norm).collect()
}

/// Directional derivative of λ̄_k along log-density direction s, from the
/// perturbation formula λ ∫ s ρ (1 − Area·u²) (simple eigenvalues).
pub fn lambda_bar_derivative(mesh: &SphereMesh, log_density: &[f64], k: usize, surface: Surface, direction: &[f64]) -> Result<f64> {
    let stiffness = assemble_stiffness(mesh)?;
    let eval = evaluate(mesh, &stiffness, log_density, k, surface, 1e-9)?;
    if eval.cluster.len() != 1 {
        return Err(Error::Numerical(format!("λ_{k} has multiplicity {}; the derivative is only directional", eval.cluster.len())));
    }
    let areas = vertex_areas(mesh)?;
    let rho: Vec<f64> = log_density.iter().map(|l| l.exp()).collect();
    let cover_area: f64 = rho.iter().zip(&areas).map(|(r, a)| r * a).sum();
    let u = &eval.cluster[0];
    let factor = if surface == Surface::RP2 { 0.5 } else { 1.0 };
    Ok(factor
        * eval.lb.lambda_k
        * (0..rho.len()).map(|i| direction[i] * rho[i] * areas[i] * (1.0 - cover_area * u[i] * u[i])).sum::<f64>())
}

/// Trust-region ascent of λ̄_k over log-densities, renormalised to unit area
/// after each step. Each step maximises the linearised smallest eigenvalue
/// of the cluster starting at λ_k (gaps included) within the current radius;
/// radii that fail to increase λ̄_k are halved, successes double it, and
/// iterations whose line search fails are recorded.
pub fn ascend(mesh: &SphereMesh, surface: Surface, k: usize, start: AscentState, opts: &AscentOptions) -> Result<AscentTrajectory> {
    if start.log_density.len() != mesh.num_vertices() {
        return Err(Error::Validation("initial log-density does not match the mesh".into()));
    }
    if surface == Surface::RP2 {
        let sigma = mesh.antipodal.as_ref().ok_or_else(|| Error::Validation("RP2 ascent needs a centrally symmetric mesh".into()))?;
        if sigma.iter().enumerate().any(|(i, &j)| (start.log_density[i] - start.log_density[j]).abs() > 1e-12) {
            return Err(Error::Validation("RP2 ascent needs a σ-even initial density".into()));
        }
    }
    let stiffness = assemble_stiffness(mesh)?;
    let areas = vertex_areas(mesh)?;
    let normalise = |logd: &mut Vec<f64>| {
        let a: f64 = logd.iter().zip(&areas).map(|(l, a)| l.exp() * a).sum();
        let shift = a.ln();
        for l in logd.iter_mut() {
            *l -= shift;
        }
    };
    let mut state = start;
    normalise(&mut state.log_density);
    let mut eval = evaluate(mesh, &stiffness, &state.log_density, k, surface, opts.cluster_tol)?;
    let fill = |s: &mut AscentState, e: &Evaluation| {
        s.lambda_bar = e.lb.lambda_bar;
        s.lambda_k = e.lb.lambda_k;
        s.area = e.lb.area;
        s.cluster_size = e.cluster.len();
    };
    fill(&mut state, &eval);
    state.step = state.step.min(opts.max_step);
    let mut states = vec![state.clone()];
    let mut failures = Vec::new();
    let mut consecutive_failures = 0;
    for it in 1..=opts.steps {
        let mut t = state.step;
        let mut accepted = None;
        for _ in 0..opts.halvings {
            let mut step = ascent_step(&areas, &state.log_density, &eval, surface, t);
            let peak = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if peak == 0.0 {
                break;
            }
            if peak > opts.max_step {
                step.iter_mut().for_each(|v| *v *= opts.max_step / peak);
            }
            let mut trial: Vec<f64> = state.log_density.iter().zip(&step).map(|(l, d)| l + d).collect();
            normalise(&mut trial);
            let e = evaluate(mesh, &stiffness, &trial, k, surface, opts.cluster_tol)?;
            if e.lb.lambda_bar > eval.lb.lambda_bar {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                consecutive_failures = 0;
                state.log_density = trial;
                eval = e;
                state.step = (2.0 * t).min(opts.max_step);
            }
            None => {
                failures.push(it);
                consecutive_failures += 1;
                state.step = t;
            }
        }
        state.iteration = it;
        fill(&mut state, &eval);
        states.push(state.clone());
        if state.step < opts.min_step || consecutive_failures >= 3 {
            break;
        }
    }
    let best = states.iter().max_by(|a, b| a.lambda_bar.total_cmp(&b.lambda_bar)).cloned().expect("nonempty trajectory");
    Ok(AscentTrajectory { states, best, line_search_failures: failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn single_bubble_integrates_to_its_area() {
        let spec = GradedSpec::for_scale(Vec3::new(0.0, 0.0, -1.0), 0.1, 48, BUBBLE_MARGIN, false);
        let mesh = graded_sphere(&spec).unwrap();
        let zero = Density::constant(mesh.num_vertices(), 0.0).unwrap();
        let b = BubbleSpec::new(Vec3::new(0.0, 0.0, -1.0), 1.0, 0.1);
        let d = bubble_density(&mesh, &zero, &[b]).unwrap();
        let areas = vertex_areas(&mesh).unwrap();
        let total: f64 = d.values.iter().zip(&areas).map(|(r, a)| r * a).sum();
        assert!((total - 1.0).abs() < 0.03, "{total}");
    }

    #[test]
    fn no_bubbles_leaves_base() {
        let mesh = icosphere(2).unwrap();
        let base = Density::new((0..mesh.num_vertices()).map(|i| 1.0 + 0.01 * i as f64).collect()).unwrap();
        assert_eq!(bubble_density(&mesh, &base, &[]).unwrap(), base);
    }

    #[test]
    fn antipodal_pair_is_even() {
        let spec = GradedSpec::for_scale(Vec3::new(0.0, 0.0, -1.0), 0.05, 32, BUBBLE_MARGIN, true);
        let mesh = graded_sphere(&spec).unwrap();
        let base = Density::constant(mesh.num_vertices(), 1.0).unwrap();
        let p = Vec3::new(0.0, 0.0, -1.0);
        let d = bubble_density(&mesh, &base, &[BubbleSpec::new(p, 2.0, 0.05), BubbleSpec::new(-p, 2.0, 0.05)]).unwrap();
        let sigma = mesh.antipodal.as_ref().unwrap();
        for (i, &j) in sigma.iter().enumerate() {
            assert!((d.values[i] - d.values[j]).abs() <= 1e-9 * d.values[i].max(1.0));
        }
    }

    #[test]
    fn overlapping_bubbles_rejected() {
        let mesh = icosphere(2).unwrap();
        let base = Density::constant(mesh.num_vertices(), 1.0).unwrap();
        let a = BubbleSpec::new(Vec3::new(0.0, 0.0, 1.0), 1.0, 0.1);
        let b = BubbleSpec::new(Vec3::new(0.0, 0.2, 1.0), 1.0, 0.1);
        assert!(matches!(bubble_density(&mesh, &base, &[a, b]), Err(Error::Validation(_))));
    }

    #[test]
    fn round_metrics() {
        let mesh = icosphere(4).unwrap();
        let one = Density::constant(mesh.num_vertices(), 1.0).unwrap();
        let s2 = lambda_bar(&mesh, &one, 1, Surface::S2).unwrap();
        assert!((s2.lambda_bar / (8.0 * PI) - 1.0).abs() < 0.01, "{}", s2.lambda_bar / PI);
        let rp2 = lambda_bar(&mesh, &one, 1, Surface::RP2).unwrap();
        assert!((rp2.lambda_bar / (12.0 * PI) - 1.0).abs() < 0.01, "{}", rp2.lambda_bar / PI);
        let ten = Density::constant(mesh.num_vertices(), 10.0).unwrap();
        let s2b = lambda_bar(&mesh, &ten, 1, Surface::S2).unwrap();
        assert!((s2b.lambda_bar - s2.lambda_bar).abs() < 1e-8 * s2.lambda_bar);
    }

    #[test]
    fn single_generator_direction_is_itself() {
        let h = vec![vec![vec![1.0, -2.0, 3.0]]];
        let g = spectraplex_direction(&h, &[1.0, 1.0, 1.0], &[0.0], 0.1);
        assert_eq!(g, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn opposing_generators_cancel() {
        // two degenerate members pulling in opposite directions: no first-order ascent
        let h = vec![vec![vec![1.0, 0.0], vec![0.0, 0.0]], vec![vec![0.0, 0.0], vec![-1.0, 0.0]]];
        let g = spectraplex_direction(&h, &[1.0, 1.0], &[0.0, 0.0], 0.1);
        assert!(g[0].abs() < 1e-6);
        // a large gap frees the lower member
        let g = spectraplex_direction(&h, &[1.0, 1.0], &[0.0, 10.0], 0.1);
        assert!(g[0] > 0.99);
    }

    #[test]
    fn family_requires_decreasing_scales() {
        assert!(limit_family(Surface::S2, 2, &[0.01, 0.1]).is_err());
        assert!(limit_family(Surface::S2, 1, &[0.1]).is_err());
        assert!(limit_family(Surface::RP2, 3, &[0.1]).is_err());
    }
}
