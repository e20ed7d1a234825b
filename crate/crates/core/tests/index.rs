use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spherelab::fem::Surface;
use spherelab::index::{
    energy_index, index_report, rp2_energy_index, rp2_spectral_index, spectral_index, spectral_index_in_gauge, IndexOptions,
};
use spherelab::maps::{degree, parse_descriptor, HarmonicMap, RationalMap};
use spherelab::mesh::icosphere;

fn opts() -> IndexOptions {
    IndexOptions::default()
}

#[test]
fn degrees_of_veronese_and_rational_maps() {
    let mesh = icosphere(3).unwrap();
    for (desc, d) in [("veronese:1", 1), ("veronese:2", 3), ("veronese:3", 6), ("rational:z^2", 2), ("rational:(z^3+1)/(z-2)", 3)] {
        assert_eq!(degree(&parse_descriptor(desc).unwrap(), &mesh).unwrap(), d, "{desc}");
    }
}

#[test]
fn veronese_spectral_indices() {
    let mesh = icosphere(3).unwrap();
    for (m, expected) in [(1, (1, 3)), (2, (4, 5)), (3, (9, 7))] {
        let map = parse_descriptor(&format!("veronese:{m}")).unwrap();
        let c = spectral_index(&map, &mesh, &opts()).unwrap();
        assert_eq!((c.index, c.nullity), expected, "m = {m}");
        assert!(c.stable);
    }
    for (m, expected) in [(2, (1, 5)), (4, (6, 9))] {
        let map = parse_descriptor(&format!("veronese:{m}")).unwrap();
        let c = rp2_spectral_index(&map, &mesh, &opts()).unwrap();
        assert_eq!((c.index, c.nullity), expected, "RP2, m = {m}");
    }
}

#[test]
fn spectral_index_is_gauge_invariant() {
    let mesh = icosphere(2).unwrap();
    let map = parse_descriptor("veronese:2").unwrap();
    let base = spectral_index(&map, &mesh, &opts()).unwrap();
    for c in [0.25, 1.0, 7.5] {
        let g = spectral_index_in_gauge(&map, &mesh, c, &opts()).unwrap();
        assert_eq!((g.index, g.nullity), (base.index, base.nullity), "c = {c}");
    }
}

#[test]
fn veronese_two_energy_index() {
    for level in [3, 4] {
        let mesh = icosphere(level).unwrap();
        let map = parse_descriptor("veronese:2").unwrap();
        let e = energy_index(&map, &mesh, 3, &opts()).unwrap();
        assert_eq!(e.index, 10, "level {level}");
        assert!(e.nullity >= 20, "level {level}: nul_E = {}", e.nullity);
    }
}

#[test]
fn padded_map_obeys_subsphere_decomposition() {
    let mesh = icosphere(2).unwrap();
    let map = parse_descriptor("pad:veronese:1:4").unwrap();
    let r = index_report(&map, &mesh, Surface::S2, &opts()).unwrap();
    assert!(!r.linearly_full);
    assert_eq!(r.inner_ind_e, Some(0));
    // ind_E = (n − 2m)·ind_S + ind_E(inner) = 2·1 + 0
    assert_eq!(r.ind_e, 2);
    let v = r.inequalities.iter().find(|v| v.name == "subsphere_decomposition").unwrap();
    assert!(v.pass && v.equality);
}

#[test]
fn rp2_energy_counts_are_halved() {
    let mesh = icosphere(3).unwrap();
    let map = parse_descriptor("veronese:2").unwrap();
    let e = rp2_energy_index(&map, &mesh, 3, &opts()).unwrap();
    assert!(e.halving_holds);
    assert_eq!((e.even.index, e.even.nullity), (5, 10));
    assert_eq!((e.full.index, e.full.nullity), (10, 20));
}

#[test]
fn holomorphic_spectral_index() {
    let mesh = icosphere(3).unwrap();
    // the Jacobi spectrum of z^d is resolved from level 4 on for d = 3
    let fine = icosphere(4).unwrap();
    for d in 1..=3 {
        let map = HarmonicMap::Rational(RationalMap::power(d).unwrap());
        let s = spectral_index(&map, &mesh, &opts()).unwrap();
        assert_eq!((s.index, s.nullity), (2 * d - 1, 3), "z^{d}");
        let e = energy_index(&map, &fine, d, &opts()).unwrap();
        assert_eq!((e.index, e.nullity), (0, 4 * d + 2), "z^{d}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let probe = icosphere(5).unwrap().vertices;
    let map = HarmonicMap::Rational(RationalMap::sample(2, &mut rng, &probe, 20.0).unwrap());
    let s = spectral_index(&map, &mesh, &opts()).unwrap();
    assert_eq!(s.index, 3, "{}", map.descriptor());
}

#[test]
fn odd_veronese_is_rejected_on_rp2_before_any_solve() {
    let mesh = icosphere(1).unwrap();
    let map = parse_descriptor("veronese:3").unwrap();
    let err = index_report(&map, &mesh, Surface::RP2, &opts()).unwrap_err();
    assert!(err.is_usage(), "{err}");
}
