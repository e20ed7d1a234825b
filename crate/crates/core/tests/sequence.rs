use num_complex::Complex64;

use spherelab::index::{energy_index, IndexOptions, JacobiPencil};
use spherelab::maps::{parse_descriptor, HarmonicMap};
use spherelab::mesh::{chart_grid, icosphere, Chart, Vec3};
use spherelab::sequence::{
    build_sequence, choose_chart_centers, dzv_refinement, gammahat_chain, integrable_jacobi, quadratic_form_quadrature,
    verify_identities, ChartField, ConjugateField, DerivativeBackend, MobiusGenerator, TangentPolynomialField, ANALYTIC_TOL,
};

#[test]
fn analytic_identities_for_veronese_maps() {
    for m in 1..=3 {
        let map = parse_descriptor(&format!("veronese:{m}")).unwrap();
        for center in choose_chart_centers(&map, 3).unwrap() {
            let grid = chart_grid(center, 0.25, 5).unwrap();
            let seq = build_sequence(&map, &grid, DerivativeBackend::Analytic).unwrap();
            assert_eq!(seq.termination, m);
            for row in verify_identities(&seq) {
                assert!(row.max_residual < ANALYTIC_TOL, "m = {m}: {} = {:e}", row.identity, row.max_residual);
            }
        }
    }
}

#[test]
fn finite_differences_reproduce_the_identities() {
    let map = parse_descriptor("veronese:2").unwrap();
    let grid = chart_grid(Vec3::new(0.0, 0.6, 0.8), 0.2, 3).unwrap();
    let seq = build_sequence(&map, &grid, DerivativeBackend::FiniteDifference { h: 1e-3 }).unwrap();
    assert_eq!(seq.termination, 2);
    for row in verify_identities(&seq) {
        assert!(row.converged, "{} = {:e}", row.identity, row.max_residual);
    }
}

#[test]
fn conjugate_field_preserves_energy_form() {
    for m in 1..=3 {
        let map = parse_descriptor(&format!("veronese:{m}")).unwrap();
        let v = TangentPolynomialField::random(&map, 7 + m as u64);
        let star = ConjugateField { map: &map, field: &v };
        let (q, scale) = quadratic_form_quadrature(&map, &v, 32);
        let (q_star, _) = quadratic_form_quadrature(&map, &star, 32);
        assert!((q - q_star).abs() / scale < 1e-6, "m = {m}: {q} vs {q_star}");
        // (V*)* = −V pointwise
        let star2 = ConjugateField { map: &map, field: &star };
        let x = Vec3::new(0.2, -0.5, 0.84).normalize();
        for (a, b) in star2.values(&x).iter().zip(v.values(&x)) {
            assert!((a + b).abs() < 1e-9);
        }
    }
}

#[test]
fn jacobi_counts_are_even() {
    let mesh = icosphere(3).unwrap();
    for (desc, d) in [("veronese:1", 1), ("rational:z^2", 2), ("veronese:2", 3)] {
        let map = parse_descriptor(desc).unwrap();
        let e = energy_index(&map, &mesh, d, &IndexOptions::default()).unwrap();
        assert_eq!(e.index % 2, 0, "{desc}: ind_E = {}", e.index);
        assert_eq!(e.nullity % 2, 0, "{desc}: nul_E = {}", e.nullity);
    }
}

fn mobius_maps() -> Vec<HarmonicMap> {
    ["veronese:1", "rational:z^2", "rational:(z^3+1)/(z-2)"].iter().map(|d| parse_descriptor(d).unwrap()).collect()
}

#[test]
fn mobius_fields_satisfy_gammahat_chain() {
    let chart = Chart::new(Vec3::new(0.3, 0.1, 0.95).normalize());
    for map in mobius_maps() {
        for g in [MobiusGenerator::rotation(), MobiusGenerator::dilation()] {
            let v = integrable_jacobi(&map, g).unwrap();
            let c = gammahat_chain(&map, &v, &chart, Complex64::new(0.05, -0.02), DerivativeBackend::Analytic).unwrap();
            assert!(c.jacobi_residual < 1e-10, "{}: {:e}", map.descriptor(), c.jacobi_residual);
            assert!(c.max_dzv_residual() < 1e-10, "{}: {:e}", map.descriptor(), c.max_dzv_residual());
        }
    }
}

#[test]
fn dzv_residual_converges_under_refinement() {
    let chart = Chart::new(Vec3::new(0.0, 0.6, 0.8));
    for map in mobius_maps() {
        let v = integrable_jacobi(&map, MobiusGenerator::dilation()).unwrap();
        let study = dzv_refinement(&map, &v, &chart, &[4e-2, 2e-2, 1e-2, 5e-3]).unwrap();
        assert!(study.converged, "{}: {:?}", map.descriptor(), study.residuals);
    }
}

#[test]
fn non_jacobi_field_is_detected() {
    let map = parse_descriptor("rational:z^2").unwrap();
    let chart = Chart::new(Vec3::new(0.0, 0.6, 0.8));
    let v = TangentPolynomialField::random(&map, 1);
    let c = gammahat_chain(&map, &v, &chart, Complex64::new(0.0, 0.0), DerivativeBackend::Analytic).unwrap();
    assert!(c.jacobi_residual > 1e-2, "{:e}", c.jacobi_residual);
}

#[test]
fn mobius_fields_are_discrete_jacobi_fields() {
    // relative residual falls with the mesh and the Rayleigh quotient sits inside the guard
    for map in mobius_maps().into_iter().take(2) {
        let v = integrable_jacobi(&map, MobiusGenerator::dilation()).unwrap();
        let mut last = f64::INFINITY;
        for level in [2, 3] {
            let mesh = icosphere(level).unwrap();
            let p = JacobiPencil::new(&map, &mesh).unwrap();
            let field: Vec<Vec<f64>> = mesh.vertices.iter().map(|x| v.values(x)).collect();
            let x = p.restrict_field(&field);
            let r = p.jacobi_residual(&x).unwrap();
            assert!(r < 0.7 * last, "{} level {level}: {r:e} after {last:e}", map.descriptor());
            last = r;
        }
        let mesh = icosphere(3).unwrap();
        let p = JacobiPencil::new(&map, &mesh).unwrap();
        let field: Vec<Vec<f64>> = mesh.vertices.iter().map(|x| v.values(x)).collect();
        let rq = p.rayleigh_quotient(&p.restrict_field(&field));
        let d = spherelab::maps::degree(&map, &mesh).unwrap();
        assert!(rq.abs() < IndexOptions::default().energy_guard_for(d), "{}: {rq}", map.descriptor());
    }
}
