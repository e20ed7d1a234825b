use std::path::Path;

use spherelab::config::Config;
use spherelab::report::{run_bundle, traceability, VerificationBundle};

fn config(level: usize) -> Config {
    Config { mesh_level: level, ..Config::default() }
}

#[test]
fn degree_three_bundle_attains_equality() {
    let bundle = run_bundle("veronese:2", &config(3));
    assert!(bundle.all_pass(), "{:#?}", bundle.failed_verdicts());
    let equal: Vec<_> = bundle
        .verdicts
        .iter()
        .filter(|v| v.scope == "RP2" && v.verdict.name == "rp2_degree_index")
        .collect();
    assert_eq!(equal.len(), 1);
    assert!(equal[0].verdict.equality);
    assert_eq!(equal[0].verdict.lhs, 1.0);
}

#[test]
fn inequalities_hold_on_bundles() {
    for descriptor in ["veronese:1", "rational:z^2/1", "pad:veronese:1:4"] {
        let bundle = run_bundle(descriptor, &config(3));
        assert!(!bundle.verdicts.is_empty());
        assert!(bundle.all_pass(), "{descriptor}: {:#?} {:?}", bundle.failed_verdicts(), bundle.errors);
        assert!(bundle.verdicts.iter().all(|v| !v.verdict.statement.is_empty()));
        assert!(
            !bundle.verdicts.iter().any(|v| v.scope == "RP2" && v.verdict.name == "rp2_degree_index" && v.verdict.equality),
            "{descriptor}: equality is specific to the degree-3 case"
        );
    }
}

#[test]
fn bundles_are_deterministic_and_round_trip() {
    let a = run_bundle("veronese:1", &config(2));
    let b = run_bundle("veronese:1", &config(2));
    assert_eq!(a.to_json(), b.to_json());
    let back = VerificationBundle::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_json(), a.to_json());
    assert_eq!(a.provenance.seed, 42);
    assert_eq!(a.provenance.build_id.len(), 12);
}

#[test]
fn stage_errors_give_partial_bundles() {
    let bad_map = run_bundle("veronese:zero", &config(2));
    assert!(bad_map.partial && !bad_map.all_pass());
    assert_eq!(bad_map.errors[0].stage, "parse");
    assert!(bad_map.errors[0].usage);

    let bad_config = run_bundle("veronese:1", &Config { eigen_tol: -1.0, ..config(2) });
    assert!(bad_config.partial);
    assert_eq!(bad_config.errors[0].stage, "config");
    assert!(bad_config.reports.is_empty());
}

#[test]
fn traceability_points_at_existing_tests() {
    let t = traceability();
    assert!(t.complete, "unmapped: {:?}", t.unmapped);
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    for entry in &t.entries {
        assert!(!entry.tests.is_empty(), "{}", entry.result);
        for reference in &entry.tests {
            let (file, name) = reference.split_once("::").unwrap();
            let source = std::fs::read_to_string(root.join(file)).unwrap_or_else(|e| panic!("{reference}: {e}"));
            assert!(source.contains(&format!("fn {name}(")), "{reference} does not exist");
        }
    }
    assert!(t.to_markdown().lines().count() > t.entries.len());
}
