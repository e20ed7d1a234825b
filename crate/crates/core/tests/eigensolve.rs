use std::time::Instant;

use spherelab::eigensolve::{solve_lowest, solve_lowest_with, SolverOptions};
use spherelab::fem::{assemble_mass, assemble_stiffness, Density};
use spherelab::mesh::icosphere;

#[test]
fn round_sphere_level5_lowest_sixteen() {
    let t = Instant::now();
    let mesh = icosphere(5).unwrap();
    let k = assemble_stiffness(&mesh).unwrap();
    let m = assemble_mass(&mesh, &Density::constant(mesh.num_vertices(), 1.0).unwrap()).unwrap();
    let s = solve_lowest(&k, &m, 16, 1e-8, 42).unwrap();
    eprintln!("{:?} iters {} time {:?} shift {}", s.eigenvalues, s.iterations, t.elapsed(), s.shift);
    assert_eq!(s.cluster_sizes(), vec![1, 3, 5, 7]);
}

#[test]
fn lobpcg_matches_dense_solver() {
    let mesh = icosphere(2).unwrap();
    let n = mesh.num_vertices();
    let k = assemble_stiffness(&mesh).unwrap();
    let rho: Vec<f64> = mesh.vertices.iter().map(|v| 1.0 + 0.5 * v.x * v.y + 0.3 * v.z).collect();
    let m = assemble_mass(&mesh, &Density::new(rho).unwrap()).unwrap();
    let dense = solve_lowest(&k, &m, 12, 1e-10, 1).unwrap();
    let opts = SolverOptions { tol: 1e-10, dense_threshold: 0, ..Default::default() };
    let iter = solve_lowest_with(&k, &m, 12, &opts).unwrap();
    assert!(n <= 400);
    for (a, b) in dense.eigenvalues.iter().zip(&iter.eigenvalues) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}
