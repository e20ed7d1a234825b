use serde_json::Value;
use spherelab_web::{enumerate_json, family_json, index_json, MAX_DEMO_LEVEL};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn enumeration_with_and_without_even_m() {
    let full = parse(&enumerate_json("").unwrap());
    assert_eq!(full["exceptions"], serde_json::json!([[2, 3], [2, 4], [4, 10]]));
    let relaxed = parse(&enumerate_json("even-m").unwrap());
    assert_eq!(relaxed["exceptions"].as_array().unwrap().len(), 5);
    assert!(enumerate_json("no-such-constraint").is_err());
}

#[test]
fn index_report_of_identity_on_coarse_mesh() {
    let r = parse(&index_json("veronese:1", "s2", 2).unwrap());
    assert_eq!(r["ind_S"], 1);
    assert_eq!(r["nul_S"], 3);
    assert_eq!(r["ind_E"], 0);
    assert!(index_json("veronese:1", "s2", MAX_DEMO_LEVEL + 1).is_err());
    assert!(index_json("veronese:1", "torus", 2).is_err());
    assert!(index_json("veronese:3", "rp2", 2).is_err());
}

#[test]
fn family_point_stays_below_ceiling() {
    let p = parse(&family_json("rp2", 2, 0.05).unwrap());
    let (v, c) = (p["lambda_bar"].as_f64().unwrap(), p["ceiling"].as_f64().unwrap());
    assert!(v > 0.5 * c && v < c, "{v} vs {c}");
    assert!(family_json("s2", 7, 0.05).is_err());
}
