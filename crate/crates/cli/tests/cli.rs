use std::path::PathBuf;
use std::process::{Command, Output};

fn spherelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spherelab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spherelab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn enumerate_reports_the_exceptional_set() {
    let o = spherelab(&["enumerate"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["exceptions"], serde_json::json!([[2, 3], [2, 4], [4, 10]]));

    let o = spherelab(&["enumerate", "--drop-constraint", "even-m"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["exceptions"], serde_json::json!([[2, 3], [2, 4], [3, 6], [3, 7], [4, 10]]));
}

#[test]
fn spectrum_is_deterministic_csv() {
    let args = ["spectrum", "--surface", "rp2", "--mesh-level", "3", "--count", "6"];
    let a = spherelab(&args);
    let b = spherelab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 7, "{text}");
    // the even sector of the round RP2 starts 0, then the five-fold eigenvalue 6
    let last: f64 = rows[6].split(',').nth(1).unwrap().parse().unwrap();
    assert!((last - 6.0).abs() < 0.1, "{text}");
}

#[test]
fn density_file_rescales_the_spectrum() {
    let path = scratch("density.txt");
    std::fs::write(&path, "2.0\n".repeat(162)).unwrap();
    let o = spherelab(&["spectrum", "--mesh-level", "2", "--count", "4", "--density", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let first_nonzero: f64 = text.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((first_nonzero - 1.0).abs() < 0.05, "{text}");
}

#[test]
fn index_writes_a_report() {
    let path = scratch("index.json");
    let o = spherelab(&["index", "--map", "veronese:1", "--mesh-level", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((v["ind_S"].as_u64(), v["nul_S"].as_u64()), (Some(1), Some(3)));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(spherelab(&["index", "--map", "veronese:3", "--surface", "rp2", "--mesh-level", "1"]).status.code(), Some(2));
    assert_eq!(spherelab(&["index", "--map", "nonsense"]).status.code(), Some(2));
    assert_eq!(spherelab(&["maximize", "--k", "0"]).status.code(), Some(2));
    assert_eq!(spherelab(&["enumerate", "--bogus"]).status.code(), Some(2));
    assert_eq!(spherelab(&["enumerate", "--drop-constraint", "unknown"]).status.code(), Some(2));
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let path = scratch("run.conf");
    std::fs::write(&path, "# coarse run\nmesh_level = 1\neigen_count = 4\n").unwrap();
    let cfg = path.to_str().unwrap();
    let o = spherelab(&["--config", cfg, "spectrum"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 5);
    let o = spherelab(&["--config", cfg, "spectrum", "--count", "2"]);
    assert_eq!(stdout(&o).lines().count(), 3);

    std::fs::write(&path, "mesh_levle = 1\n").unwrap();
    assert_eq!(spherelab(&["--config", cfg, "spectrum"]).status.code(), Some(2));
}

#[test]
fn sequence_verify_passes_for_veronese_maps() {
    let o = spherelab(&["sequence-verify", "--map", "veronese:2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = spherelab(&["sequence-verify", "--map", "veronese:2", "--backend", "fd"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn family_mode_stays_below_the_ceiling() {
    let path = scratch("family.json");
    let o = spherelab(&["maximize", "--surface", "rp2", "--k", "2", "--mode", "family", "--summary", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v.is_object());
}
