//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each operation has a plain Rust function returning JSON (tested natively)
//! and a `#[wasm_bindgen]` wrapper that turns errors into JS exceptions.
//! Everything runs on the calling thread: browsers give wasm no threads here.

use serde_json::json;
use wasm_bindgen::prelude::*;

use spherelab::arithmetic::{derive_m_cutoff, enumerate_without, Constraint};
use spherelab::config::DEFAULT_SEED;
use spherelab::fem::Surface;
use spherelab::index::{index_report, IndexOptions};
use spherelab::maps::parse_descriptor;
use spherelab::mesh::icosphere;
use spherelab::optimize::{family_point, lambda_bar_ceiling, FAMILY_COLUMNS};

/// Finest mesh the demo accepts, to keep the page responsive.
pub const MAX_DEMO_LEVEL: usize = 3;

/// Exceptional (m, d) pairs with the named constraints dropped
/// (comma separated, empty for none).
pub fn enumerate_json(dropped: &str) -> Result<String, String> {
    let dropped = dropped
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Constraint::parse)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let e = enumerate_without(&dropped);
    Ok(json!({
        "active": e.active.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "exceptions": e.exceptions,
        "witnesses": e.witnesses.len(),
        "m_cutoff": derive_m_cutoff(),
    })
    .to_string())
}

/// Spectral and energy index report of a map on a coarse icosphere.
pub fn index_json(descriptor: &str, surface: &str, level: usize) -> Result<String, String> {
    if level > MAX_DEMO_LEVEL {
        return Err(format!("mesh level {level} too fine for the demo (max {MAX_DEMO_LEVEL})"));
    }
    let surface: Surface = surface.parse().map_err(|e: spherelab::Error| e.to_string())?;
    let map = parse_descriptor(descriptor).map_err(|e| e.to_string())?;
    let mesh = icosphere(level).map_err(|e| e.to_string())?;
    let opts = IndexOptions { seed: DEFAULT_SEED, ..Default::default() };
    let report = index_report(&map, &mesh, surface, &opts).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// λ̄_k of one member of the bubbling family at scale `eps`, with the ceiling.
pub fn family_json(surface: &str, k: usize, eps: f64) -> Result<String, String> {
    let surface: Surface = surface.parse().map_err(|e: spherelab::Error| e.to_string())?;
    let p = family_point(surface, k, eps, FAMILY_COLUMNS / 2).map_err(|e| e.to_string())?;
    let ceiling = lambda_bar_ceiling(surface, k);
    Ok(json!({
        "eps": p.eps,
        "lambda_bar": p.lambda_bar,
        "lambda_bar_over_pi": p.lambda_bar / std::f64::consts::PI,
        "ceiling": ceiling,
        "ceiling_over_pi": ceiling / std::f64::consts::PI,
        "vertices": p.vertices,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn enumerate(dropped: &str) -> Result<String, JsError> {
    js(enumerate_json(dropped))
}

#[wasm_bindgen(js_name = indexReport)]
pub fn index_report_js(descriptor: &str, surface: &str, level: usize) -> Result<String, JsError> {
    js(index_json(descriptor, surface, level))
}

#[wasm_bindgen(js_name = familyPoint)]
pub fn family_point_js(surface: &str, k: usize, eps: f64) -> Result<String, JsError> {
    js(family_json(surface, k, eps))
}
