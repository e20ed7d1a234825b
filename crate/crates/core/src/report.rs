//! Per-map verification bundles (index reports, inequality verdicts,
//! sequence residuals, provenance) and the result-to-test traceability table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::arithmetic::{ind_e_lower_bound, ind_s_lower_bound_unchecked, veronese_closed_forms};
use crate::config::Config;
use crate::error::Error;
use crate::fem::Surface;
use crate::index::{index_report, IndexReport, Verdict};
use crate::maps::{parse_descriptor, HarmonicMap};
use crate::mesh::{chart_grid, icosphere};
use crate::sequence::{build_sequence, choose_chart_centers, verify_identities, DerivativeBackend, IdentityResidual};

/// A verdict together with the part of the bundle it was computed from:
/// "S2", "RP2", "arithmetic" or "sequence".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleVerdict {
    pub scope: String,
    pub verdict: Verdict,
}

/// A pipeline stage that failed, with its error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
    /// The error was caused by the input rather than numerical trouble.
    pub usage: bool,
}

/// Everything needed to re-run a bundle and compare the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mesh_level: usize,
    pub seed: u64,
    pub eigen_tol: f64,
    pub spectral_guard: f64,
    /// Jacobi guard of each computed report, in report order.
    pub energy_guards: Vec<f64>,
    pub sequence_tol: f64,
    /// Flat configuration text the bundle was computed from.
    pub config: String,
    /// Short content hash of crate version, descriptor and configuration.
    pub build_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationBundle {
    pub map: String,
    /// S² report first, then the RP² report when the map is even.
    pub reports: Vec<IndexReport>,
    pub verdicts: Vec<BundleVerdict>,
    pub sequence_residuals: Vec<IdentityResidual>,
    pub provenance: Provenance,
    pub partial: bool,
    pub errors: Vec<StageError>,
}

impl VerificationBundle {
    /// Every computed verdict passes and no stage failed.
    pub fn all_pass(&self) -> bool {
        !self.partial && self.verdicts.iter().all(|v| v.verdict.pass)
    }

    pub fn failed_verdicts(&self) -> Vec<&BundleVerdict> {
        self.verdicts.iter().filter(|v| !v.verdict.pass).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundles contain only finite numbers and strings")
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("bundle JSON: {e}")))
    }
}

/// 64-bit FNV-1a, printed as 12 hex digits.
fn content_hash(parts: &[&str]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0u8)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{:012x}", h >> 16)
}

fn int_verdict(name: &str, statement: &str, lhs: i64, relation: &str, rhs: f64) -> Verdict {
    let l = lhs as f64;
    let pass = match relation {
        "=" => l == rhs,
        _ => l >= rhs,
    };
    Verdict { name: name.into(), pass, lhs: l, rhs, relation: relation.into(), statement: statement.into(), equality: l == rhs }
}

/// Cross-checks of one report against the closed forms and the exact
/// bounds of the arithmetic module.
fn arithmetic_checks(map: &HarmonicMap, r: &IndexReport) -> Vec<Verdict> {
    let mut out = Vec::new();
    let (is, ns, ie, ne) = (r.ind_s as i64, r.nul_s as i64, r.ind_e as i64, r.nul_e as i64);
    let sphere = r.surface == Surface::S2;
    if sphere && r.linearly_full {
        if let Ok(b) = ind_e_lower_bound(r.m as u64, r.d as u64) {
            let rhs: f64 = b.to_string().parse().unwrap_or(f64::INFINITY);
            out.push(int_verdict("energy_index_from_degree", "ind_E >= 2(m-1)(2d - [sqrt(8d+1)]_odd + 2)", ie, ">=", rhs));
        }
        let b = ind_s_lower_bound_unchecked(r.m as i64, r.d as i64, ns);
        let rhs = b.numerator().to_string().parse::<f64>().unwrap_or(f64::NAN) / b.denominator().to_string().parse::<f64>().unwrap_or(f64::NAN);
        out.push(int_verdict("combined_spectral_bound", "ind_S >= ((2d - nul_S + 2)(m-1) + 2d - m - m^2)/(2m+1)", is, ">=", rhs));
        out.push(int_verdict("jacobi_index_parity", "ind_E = 0 mod 2 (conjugate-field pairing)", ie % 2, "=", 0.0));
        out.push(int_verdict("jacobi_nullity_parity", "nul_E = 0 mod 2 (conjugate-field pairing)", ne % 2, "=", 0.0));
    }
    match map {
        HarmonicMap::Polynomial(p) if p.label.starts_with("veronese:") => {
            if let Ok(f) = veronese_closed_forms(r.m as u64) {
                out.push(int_verdict("veronese_degree", "d = m(m+1)/2", r.d as i64, "=", f.d as f64));
                let (target, statement) = if sphere {
                    (Some(f.ind_s_sphere), "ind_S = m^2 on S^2")
                } else {
                    (f.ind_s_rp2, "ind_S = m(m-1)/2 on RP^2")
                };
                if let Some(t) = target {
                    out.push(int_verdict("veronese_spectral_index", statement, is, "=", t as f64));
                }
                if sphere && r.m == 2 {
                    out.push(int_verdict("veronese_two_energy_index", "ind_E = 4d - 2 for the degree-two Veronese map", ie, "=", (4 * r.d - 2) as f64));
                }
            }
        }
        HarmonicMap::Rational(_) if sphere => {
            out.push(int_verdict("holomorphic_spectral_index", "ind_S = 2d - 1 for holomorphic maps into S^2", is, "=", (2 * r.d - 1) as f64));
            out.push(int_verdict("holomorphic_spectral_nullity", "nul_S = 3 for generic holomorphic maps into S^2", ns, "=", 3.0));
            out.push(int_verdict("holomorphic_energy_index", "ind_E = 0 (holomorphic maps minimise energy)", ie, "=", 0.0));
        }
        _ => {}
    }
    if let Some(h) = r.halving_holds {
        out.push(int_verdict("rp2_halving", "ind_E(RP^2) = ind_E(S^2)/2 and nul_E(RP^2) = nul_E(S^2)/2", h as i64, "=", 1.0));
    }
    out
}

/// The map whose harmonic sequence is checked: padding does not change it.
fn sequence_map(map: &HarmonicMap) -> &HarmonicMap {
    match map {
        HarmonicMap::Padded { inner, .. } => sequence_map(inner),
        other => other,
    }
}

fn sequence_rows(map: &HarmonicMap, config: &Config) -> crate::Result<Vec<IdentityResidual>> {
    let map = sequence_map(map);
    let mut rows = Vec::new();
    for center in choose_chart_centers(map, config.charts)? {
        let grid = chart_grid(center, config.chart_radius, config.chart_points)?;
        let seq = build_sequence(map, &grid, DerivativeBackend::Analytic)?;
        rows.extend(verify_identities(&seq));
    }
    Ok(rows)
}

fn sequence_verdicts(rows: &[IdentityResidual]) -> Vec<Verdict> {
    let tol = DerivativeBackend::Analytic.tolerance();
    let mut names: Vec<&str> = rows.iter().map(|r| r.identity.as_str()).collect();
    names.dedup();
    names.sort_unstable();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let these: Vec<&IdentityResidual> = rows.iter().filter(|r| r.identity == name).collect();
            let worst = these.iter().map(|r| r.max_residual).fold(0.0, f64::max);
            Verdict {
                name: format!("sequence_{name}"),
                pass: these.iter().all(|r| r.converged),
                lhs: worst,
                rhs: tol,
                relation: "<=".into(),
                statement: format!("harmonic-sequence {name} residual <= {tol:e} on every chart"),
                equality: false,
            }
        })
        .collect()
}

/// Run maps → index → sequence → arithmetic cross-checks for one map.
///
/// Never fails: a stage error is recorded and the bundle marked partial.
/// The result depends only on the descriptor and the configuration.
pub fn run_bundle(descriptor: &str, config: &Config) -> VerificationBundle {
    let config_text = config.to_text();
    let mut bundle = VerificationBundle {
        map: descriptor.trim().to_string(),
        reports: vec![],
        verdicts: vec![],
        sequence_residuals: vec![],
        provenance: Provenance {
            mesh_level: config.mesh_level,
            seed: config.seed,
            eigen_tol: config.eigen_tol,
            spectral_guard: config.spectral_guard,
            energy_guards: vec![],
            sequence_tol: DerivativeBackend::Analytic.tolerance(),
            build_id: content_hash(&[env!("CARGO_PKG_VERSION"), descriptor.trim(), &config_text]),
            config: config_text,
        },
        partial: false,
        errors: vec![],
    };
    let fail = |b: &mut VerificationBundle, stage: &str, e: Error| {
        b.partial = true;
        b.errors.push(StageError { stage: stage.into(), message: e.to_string(), usage: e.is_usage() });
    };
    if let Err(e) = config.validate() {
        fail(&mut bundle, "config", e);
        return bundle;
    }
    let map = match parse_descriptor(descriptor) {
        Ok(m) => m,
        Err(e) => {
            fail(&mut bundle, "parse", e);
            return bundle;
        }
    };
    bundle.map = map.descriptor();
    let mesh = match icosphere(config.mesh_level) {
        Ok(m) => m,
        Err(e) => {
            fail(&mut bundle, "mesh", e);
            return bundle;
        }
    };
    let opts = config.index_options();
    let mut surfaces = vec![Surface::S2];
    if map.is_antipodally_even() {
        surfaces.push(Surface::RP2);
    }
    for surface in surfaces {
        match index_report(&map, &mesh, surface, &opts) {
            Ok(r) => {
                let scope = surface.to_string();
                for v in &r.inequalities {
                    bundle.verdicts.push(BundleVerdict { scope: scope.clone(), verdict: v.clone() });
                }
                for v in arithmetic_checks(&map, &r) {
                    bundle.verdicts.push(BundleVerdict { scope: "arithmetic".into(), verdict: v });
                }
                bundle.provenance.energy_guards.push(r.energy_guard);
                bundle.reports.push(r);
            }
            Err(e) => fail(&mut bundle, &format!("index:{surface}"), e),
        }
    }
    match sequence_rows(&map, config) {
        Ok(rows) => {
            for v in sequence_verdicts(&rows) {
                bundle.verdicts.push(BundleVerdict { scope: "sequence".into(), verdict: v });
            }
            bundle.sequence_residuals = rows;
        }
        Err(e) => fail(&mut bundle, "sequence", e),
    }
    bundle
}

// ---------------------------------------------------------------------------
// traceability

/// A reproduced result and the tests exercising it, as "file::test_name"
/// relative to the core crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub result: String,
    pub module: String,
    pub tests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traceability {
    pub entries: Vec<TraceEntry>,
    /// In-scope results without any test.
    pub unmapped: Vec<String>,
    pub complete: bool,
}

/// Every reproduced result, stated symbolically.
pub const IN_SCOPE_RESULTS: &[&str] = &[
    "Λ_k(S²) = 8πk, approached by k touching round spheres",
    "Λ_k(RP²) = 4π(2k+1), approached by k−1 spheres and a projective plane",
    "Δ_g Φ = |∇Φ|²_g Φ for harmonic Φ into S^n",
    "E(Φ) = 4πd with d ≥ m(m+1)/2",
    "harmonic maps RP² → S^{2m} need m even",
    "Veronese map: eigenvalue m(m+1) with multiplicity 2m+1",
    "Veronese indices: ind_S = m² on S², m(m−1)/2 on RP²",
    "spectral index and nullity of g_Φ = ½|∇Φ|²g",
    "ind_S ≥ (d − 1)/2 on RP², equality iff d = 3",
    "exceptional set {(2,3),(2,4),(4,10)} with cutoff m ≤ 6",
    "ind_S ≥ ind_E/(n+1)",
    "ind_E ≥ 2(m−1) ind_S",
    "ind_S ≥ (ind_E + nul_E − m(2m+1))/(2m+1)",
    "ind_S ≥ 2d − nul_S + 2",
    "d ≥ (nul_S² − 1)/8",
    "nul_E ≥ 4d + 2m²",
    "ind_E = 4d − 2 for the degree-two Veronese map",
    "ind_E = (n − 2m) ind_S + ind_E(inner) for maps in a subsphere",
    "Jacobi counts on RP² are half those on S²",
    "ind_S = 2d − 1 for holomorphic maps into S²",
    "harmonic sequence recursions and Toda identity for γ_p",
    "harmonic sequence terminates at p = m; isotropy and orthogonality",
    "conjugate field V* = 2 Im V₊ with (V*)* = −V and Q_E(V*) = Q_E(V)",
    "ind_E and nul_E are even",
    "γ̂ recursion and the ∂V_{−p}/∂z identity for Jacobi fields",
    "Möbius-generated fields are Jacobi fields",
];

fn entry(result: &str, module: &str, tests: &[&str]) -> TraceEntry {
    TraceEntry { result: result.into(), module: module.into(), tests: tests.iter().map(|s| s.to_string()).collect() }
}

/// The static result-to-test table, checked for completeness against
/// [`IN_SCOPE_RESULTS`].
pub fn traceability() -> Traceability {
    let r = IN_SCOPE_RESULTS;
    let entries = vec![
        entry(r[0], "optimize", &["tests/optimize.rs::sphere_bubbling_family_approaches_limit", "tests/acceptance.rs::isoperimetric_limits"]),
        entry(r[1], "optimize", &["tests/optimize.rs::projective_bubbling_family_approaches_limit", "src/arithmetic.rs::composite_limits"]),
        entry(r[2], "maps", &["src/maps.rs::harmonic_basis_is_harmonic_and_unit", "src/maps.rs::perturbed_component_is_not_harmonic"]),
        entry(r[3], "maps", &["src/maps.rs::veronese_densities_are_constant", "tests/index.rs::degrees_of_veronese_and_rational_maps"]),
        entry(r[4], "index", &["src/index.rs::odd_map_rejected_on_rp2", "tests/arithmetic.rs::odd_m_rejected_by_case_validation"]),
        entry(r[5], "eigensolve", &["tests/eigensolve.rs::round_sphere_level5_lowest_sixteen", "tests/acceptance.rs::round_sphere_spectrum"]),
        entry(r[6], "index", &["tests/index.rs::veronese_spectral_indices", "src/arithmetic.rs::veronese_forms"]),
        entry(r[7], "index", &["src/index.rs::round_sphere_identity_counts", "tests/index.rs::spectral_index_is_gauge_invariant"]),
        entry(r[8], "arithmetic", &["src/arithmetic.rs::induction_traces", "tests/report.rs::degree_three_bundle_attains_equality"]),
        entry(r[9], "arithmetic", &["src/arithmetic.rs::exceptional_set", "src/arithmetic.rs::cutoff", "src/arithmetic.rs::dropping_even_m_enlarges_the_set"]),
        entry(r[10], "index", &["src/index.rs::fabricated_report_fails_index_ratio", "tests/report.rs::inequalities_hold_on_bundles"]),
        entry(r[11], "index", &["tests/report.rs::inequalities_hold_on_bundles"]),
        entry(r[12], "index", &["tests/report.rs::inequalities_hold_on_bundles"]),
        entry(r[13], "index", &["tests/report.rs::inequalities_hold_on_bundles", "src/arithmetic.rs::spectral_index_bound_values"]),
        entry(r[14], "index", &["tests/report.rs::inequalities_hold_on_bundles"]),
        entry(r[15], "index", &["tests/index.rs::veronese_two_energy_index"]),
        entry(r[16], "index", &["tests/index.rs::veronese_two_energy_index"]),
        entry(r[17], "index", &["tests/index.rs::padded_map_obeys_subsphere_decomposition"]),
        entry(r[18], "index", &["tests/index.rs::rp2_energy_counts_are_halved"]),
        entry(r[19], "index", &["tests/index.rs::holomorphic_spectral_index"]),
        entry(r[20], "sequence", &["src/sequence.rs::veronese_sequences_terminate_at_m", "tests/sequence.rs::analytic_identities_for_veronese_maps"]),
        entry(r[21], "sequence", &["src/sequence.rs::veronese_sequences_terminate_at_m", "tests/sequence.rs::analytic_identities_for_veronese_maps"]),
        entry(r[22], "sequence", &["src/sequence.rs::conjugation_is_an_anti_involution", "tests/sequence.rs::conjugate_field_preserves_energy_form"]),
        entry(r[23], "index", &["tests/sequence.rs::jacobi_counts_are_even"]),
        entry(r[24], "sequence", &["tests/sequence.rs::mobius_fields_satisfy_gammahat_chain"]),
        entry(r[25], "sequence", &["tests/sequence.rs::mobius_fields_are_discrete_jacobi_fields"]),
    ];
    let unmapped: Vec<String> = IN_SCOPE_RESULTS
        .iter()
        .filter(|res| !entries.iter().any(|e| e.result == **res && !e.tests.is_empty()))
        .map(|s| s.to_string())
        .collect();
    let complete = unmapped.is_empty();
    Traceability { entries, unmapped, complete }
}

impl Traceability {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| result | module | tests |\n|---|---|---|\n");
        for e in &self.entries {
            let _ = writeln!(s, "| {} | {} | {} |", e.result, e.module, e.tests.join("<br>"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_descriptor_gives_partial_bundle() {
        let b = run_bundle("veronese:x", &Config::default());
        assert!(b.partial);
        assert_eq!(b.errors[0].stage, "parse");
        assert!(b.errors[0].usage);
        assert!(b.reports.is_empty());
        assert!(!b.all_pass());
    }

    #[test]
    fn traceability_is_complete() {
        let t = traceability();
        assert!(t.complete, "unmapped: {:?}", t.unmapped);
        assert_eq!(t.entries.len(), IN_SCOPE_RESULTS.len());
        assert!(t.to_markdown().starts_with("| result |"));
    }

    #[test]
    fn content_hash_is_stable_and_sensitive() {
        assert_eq!(content_hash(&["a", "b"]), content_hash(&["a", "b"]));
        assert_ne!(content_hash(&["a", "b"]), content_hash(&["ab"]));
        assert_eq!(content_hash(&["x"]).len(), 12);
    }
}
