use num_complex::Complex64;
use proptest::prelude::*;

use spherelab::mesh::{icosphere, Chart, Vec3};

#[test]
fn icospheres_are_symmetric_closed_surfaces() {
    for level in 0..=4 {
        let mesh = icosphere(level).unwrap();
        assert_eq!(mesh.num_vertices(), 10 * 4usize.pow(level as u32) + 2);
        assert_eq!(mesh.euler_characteristic(), 2);
        let sigma = mesh.antipodal.as_ref().unwrap();
        for (i, &j) in sigma.iter().enumerate() {
            assert_ne!(i, j);
            assert_eq!(sigma[j], i);
            assert!((mesh.vertices[i] + mesh.vertices[j]).norm() < 1e-14);
        }
    }
}

#[test]
fn area_approaches_four_pi() {
    let area = |l: usize| {
        let m = icosphere(l).unwrap();
        m.triangles
            .iter()
            .map(|t| 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(&(m.vertices[t[2]] - m.vertices[t[0]])).norm())
            .sum::<f64>()
    };
    let four_pi = 4.0 * std::f64::consts::PI;
    let mut last = 0.0;
    for l in 0..=4 {
        let a = area(l);
        assert!(a > last && a < four_pi);
        last = a;
    }
    assert!((four_pi - last) / four_pi < 5e-3);
}

proptest! {
    #[test]
    fn chart_round_trip(theta in 0.0f64..3.0, phi in 0.0f64..6.28, ct in 0.0f64..3.1, cp in 0.0f64..6.28) {
        let x = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let c = Vec3::new(ct.sin() * cp.cos(), ct.sin() * cp.sin(), ct.cos());
        prop_assume!((x + c).norm() > 1e-3);
        let chart = Chart::new(c);
        let z = chart.from_sphere(&x);
        prop_assert!((chart.to_sphere(z) - x).norm() < 1e-10);
        prop_assert!((chart.to_sphere(Complex64::new(0.0, 0.0)) - c).norm() < 1e-14);
    }
}
