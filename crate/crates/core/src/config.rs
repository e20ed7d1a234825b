//! Run configuration as flat `key = value` text, so recorded provenance can
//! be diffed and fed back verbatim.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Surface;
use crate::index::{IndexOptions, SPECTRAL_GUARD};

/// Default random seed of every pipeline.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub mesh_level: usize,
    /// Relative residual tolerance of the eigensolver.
    pub eigen_tol: f64,
    /// Number of eigenpairs requested by `spectrum`.
    pub eigen_count: usize,
    /// Guard band around λ = 2 for spectral counts.
    pub spectral_guard: f64,
    /// Guard band around 0 for Jacobi counts; `None` scales with the degree.
    pub energy_guard: Option<f64>,
    pub seed: u64,
    pub surface: Surface,
    /// Number of charts sampled by the sequence checks.
    pub charts: usize,
    /// Samples per side of each chart grid.
    pub chart_points: usize,
    /// Half-width of each chart grid in the stereographic coordinate.
    pub chart_radius: f64,
    pub out: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            mesh_level: 4,
            eigen_tol: 1e-7,
            eigen_count: 16,
            spectral_guard: SPECTRAL_GUARD,
            energy_guard: None,
            seed: DEFAULT_SEED,
            surface: Surface::S2,
            charts: 2,
            chart_points: 5,
            chart_radius: 0.2,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse(format!("bad value '{value}' for key '{key}'")))
}

impl Config {
    /// Parse `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Override one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mesh_level" => self.mesh_level = parse_num(key, value)?,
            "eigen_tol" => self.eigen_tol = parse_num(key, value)?,
            "eigen_count" => self.eigen_count = parse_num(key, value)?,
            "spectral_guard" => self.spectral_guard = parse_num(key, value)?,
            "energy_guard" => self.energy_guard = if value == "auto" { None } else { Some(parse_num(key, value)?) },
            "seed" => self.seed = parse_num(key, value)?,
            "surface" => self.surface = value.parse()?,
            "charts" => self.charts = parse_num(key, value)?,
            "chart_points" => self.chart_points = parse_num(key, value)?,
            "chart_radius" => self.chart_radius = parse_num(key, value)?,
            "out" => self.out = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            _ => return Err(Error::Parse(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_level > 8 {
            return Err(Error::Config(format!("mesh_level {} out of range 0..=8", self.mesh_level)));
        }
        let positive = [("eigen_tol", self.eigen_tol), ("spectral_guard", self.spectral_guard), ("chart_radius", self.chart_radius)];
        for (k, v) in positive.into_iter().chain(self.energy_guard.map(|g| ("energy_guard", g))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if self.eigen_count == 0 {
            return Err(Error::Config("eigen_count must be ≥ 1".into()));
        }
        if self.chart_points < 3 {
            return Err(Error::Config("chart_points must be ≥ 3".into()));
        }
        Ok(())
    }

    /// The flat text form; `Config::parse(&c.to_text())` returns `c`.
    pub fn to_text(&self) -> String {
        let mut fields = BTreeMap::new();
        fields.insert("mesh_level", self.mesh_level.to_string());
        fields.insert("eigen_tol", format!("{:e}", self.eigen_tol));
        fields.insert("eigen_count", self.eigen_count.to_string());
        fields.insert("spectral_guard", self.spectral_guard.to_string());
        fields.insert("energy_guard", self.energy_guard.map_or("auto".into(), |g| g.to_string()));
        fields.insert("seed", self.seed.to_string());
        fields.insert("surface", self.surface.to_string());
        fields.insert("charts", self.charts.to_string());
        fields.insert("chart_points", self.chart_points.to_string());
        fields.insert("chart_radius", self.chart_radius.to_string());
        fields.insert("out", self.out.as_ref().map_or(String::new(), |p| p.display().to_string()));
        let mut s = String::new();
        for (k, v) in fields {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn index_options(&self) -> IndexOptions {
        IndexOptions { spectral_guard: self.spectral_guard, energy_guard: self.energy_guard, tol: self.eigen_tol, seed: self.seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_use_seed_42() {
        assert_eq!(Config::default().seed, 42);
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::default();
        c.set("surface", "rp2").unwrap();
        c.set("energy_guard", "0.25").unwrap();
        c.set("out", "/tmp/x.json").unwrap();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Config::parse("colour = red"), Err(Error::Parse(_))));
        assert!(matches!(Config::parse("eigen_tol = -1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("mesh_level"), Err(Error::Parse(_))));
        assert!(matches!(Config::parse("mesh_level = 9"), Err(Error::Config(_))));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let c = Config::parse("# run\n\nmesh_level = 3\n").unwrap();
        assert_eq!(c.mesh_level, 3);
    }
}
