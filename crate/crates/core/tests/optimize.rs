use std::f64::consts::PI;

use proptest::prelude::*;

use spherelab::fem::{Density, Surface};
use spherelab::mesh::icosphere;
use spherelab::optimize::{
    ascend, lambda_bar, lambda_bar_ceiling, lambda_bar_derivative, limit_family, random_start, AscentOptions,
};

const SCALES: [f64; 5] = [0.1, 0.03, 0.01, 0.003, 0.001];

fn check_family(surface: Surface, k: usize) {
    let ceiling = lambda_bar_ceiling(surface, k);
    let points = limit_family(surface, k, &SCALES).unwrap();
    let values: Vec<f64> = points.iter().map(|p| p.lambda_bar).collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "not monotone: {values:?}");
    assert!(values.iter().all(|&v| v <= ceiling * 1.05), "{values:?} above {ceiling}");
    let last = *values.last().unwrap();
    assert!((ceiling - last) / ceiling < 0.05, "λ̄ = {:.3}π vs {:.1}π", last / PI, ceiling / PI);
}

#[test]
fn sphere_bubbling_family_approaches_limit() {
    check_family(Surface::S2, 2);
}

#[test]
fn projective_bubbling_family_approaches_limit() {
    check_family(Surface::RP2, 2);
}

#[test]
fn ascent_reaches_round_metric() {
    let mesh = icosphere(3).unwrap();
    for (surface, target) in [(Surface::S2, 8.0 * PI), (Surface::RP2, 12.0 * PI)] {
        let start = random_start(&mesh, surface, 0.3, 42);
        let traj = ascend(&mesh, surface, 1, start, &AscentOptions::default()).unwrap();
        let best = traj.best.lambda_bar;
        assert!((best - target).abs() / target < 0.02, "{surface}: {:.4}π", best / PI);
        assert!(traj.states.iter().all(|s| s.lambda_bar <= target * 1.05));
        assert!(traj.states.windows(2).all(|w| w[1].lambda_bar >= w[0].lambda_bar));
        assert!(traj.to_csv().starts_with("iter,lambda_k,area,lambda_bar,step\n"));
    }
}

#[test]
fn perturbation_formula_matches_finite_differences() {
    let mesh = icosphere(2).unwrap();
    for surface in [Surface::S2, Surface::RP2] {
        let base = random_start(&mesh, surface, 0.5, 3).log_density;
        for seed in 0..10 {
            let dir = random_start(&mesh, surface, 1.0, 100 + seed).log_density;
            let analytic = lambda_bar_derivative(&mesh, &base, 1, surface, &dir).unwrap();
            let h = 1e-4;
            let at = |t: f64| {
                let rho: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| (b + t * d).exp()).collect();
                lambda_bar(&mesh, &Density::new(rho).unwrap(), 1, surface).unwrap().lambda_bar
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((analytic - fd).abs() <= 1e-3 * fd.abs().max(1e-2), "{surface} seed {seed}: {analytic} vs {fd}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lambda_bar_is_scale_invariant(log_c in -6.0f64..6.0, seed in 0u64..1000) {
        let mesh = icosphere(2).unwrap();
        let logd = random_start(&mesh, Surface::S2, 0.4, seed).log_density;
        let rho: Vec<f64> = logd.iter().map(|l| l.exp()).collect();
        let a = lambda_bar(&mesh, &Density::new(rho.clone()).unwrap(), 1, Surface::S2).unwrap();
        let scaled: Vec<f64> = rho.iter().map(|r| r * log_c.exp()).collect();
        let b = lambda_bar(&mesh, &Density::new(scaled).unwrap(), 1, Surface::S2).unwrap();
        prop_assert!((a.lambda_bar - b.lambda_bar).abs() < 1e-8 * a.lambda_bar);
        prop_assert!(a.lambda_bar <= lambda_bar_ceiling(Surface::S2, 1) * 1.05);
    }
}
