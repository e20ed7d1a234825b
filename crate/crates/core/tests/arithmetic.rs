use num_bigint::BigInt;
use proptest::prelude::*;

use spherelab::arithmetic::{
    derive_m_cutoff, enumerate_exceptions, enumerate_without, failure_from_bound, failure_inequality, ind_e_lower_bound,
    ind_s_lower_bound, odd_floor_sqrt, verify_induction_step, CaseTriple, Constraint, RationalBound,
};

#[test]
fn odd_m_rejected_by_case_validation() {
    let err = ind_s_lower_bound(CaseTriple { m: 3, d: 6, nu: 7 }).unwrap_err();
    assert!(err.is_usage(), "{err}");
    assert!(ind_s_lower_bound(CaseTriple { m: 2, d: 3, nu: 5 }).is_ok());
}

#[test]
fn enumeration_is_deterministic_and_exact() {
    let a = enumerate_without(&[]);
    let b = enumerate_without(&[]);
    assert_eq!(a, b);
    assert_eq!(a.exceptions, [(2, 3), (2, 4), (4, 10)].into_iter().collect());
    assert_eq!(enumerate_exceptions(), a.exceptions);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn dropping_a_constraint_never_shrinks_the_set() {
    let full = enumerate_exceptions();
    for c in Constraint::ALL {
        let relaxed = enumerate_without(&[c]);
        assert!(full.is_subset(&relaxed.exceptions), "dropping {} lost cases", c.name());
    }
}

#[test]
fn cutoff_dominates_enumeration() {
    let c = derive_m_cutoff();
    assert!(c.enumeration_max <= c.sharp_cutoff && c.sharp_cutoff <= c.chain_cutoff);
    assert_eq!(c.chain_cutoff, 6);
}

#[test]
fn induction_chains_close_for_small_k() {
    for k in 1..=20 {
        assert!(verify_induction_step(k).unwrap().contradiction_derived(), "k = {k}");
    }
}

proptest! {
    #[test]
    fn odd_floor_sqrt_brackets_its_argument(x in 1u64..1_000_000_000) {
        let k = odd_floor_sqrt(x).unwrap();
        prop_assert_eq!(k % 2, 1);
        prop_assert!(k * k <= x);
        prop_assert!((k + 2) * (k + 2) > x);
    }

    #[test]
    fn failure_forms_agree(m in 2i64..40, d in 1i64..2000, nu in 1i64..200) {
        prop_assert_eq!(failure_inequality(m, d, nu), failure_from_bound(m, d, nu));
    }

    #[test]
    fn energy_bound_is_nonnegative_and_grows_with_m(m in 1u64..30, extra in 0u64..500) {
        let d = m * (m + 1) / 2 + extra;
        let a = ind_e_lower_bound(m, d).unwrap();
        let b = ind_e_lower_bound(m + 1, d.max((m + 1) * (m + 2) / 2)).unwrap();
        prop_assert!(a >= BigInt::from(0));
        prop_assert!(b >= a);
    }

    #[test]
    fn rational_bounds_round_trip_through_json(n in -10_000i64..10_000, d in 1i64..10_000) {
        let b = RationalBound::new(n, d);
        let s = serde_json::to_string(&b).unwrap();
        prop_assert_eq!(serde_json::from_str::<RationalBound>(&s).unwrap(), b.clone());
        prop_assert!(BigInt::from(n) <= b.ceil() * BigInt::from(d));
    }
}
