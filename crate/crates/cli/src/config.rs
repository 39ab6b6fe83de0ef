//! Flat key-value run configuration.
//!
//! One `key = value` assignment per line, `#` comments, blank lines
//! ignored. The parameter space is flat, so a flat format stays
//! diff-friendly for sweep scripting; [`RunConfig::echo`] serializes the
//! effective configuration back to the same format, and parsing that echo
//! reproduces the run exactly (the round trip is tested). Grid-valued keys
//! accept either a comma-separated list (`0.2, 2, 5`) or an inclusive
//! linspace `lo:hi:n` with integer n ≥ 2.

use std::collections::BTreeMap;
use std::fmt;
use tpcs_core::ensemble::{Geometry, GeometrySpec};
use tpcs_core::params::{SystemParams, PEAK_DELTA_TILDE};

/// Bumped whenever the config keys, CSV column sets, or the JSON schema
/// change. Data files embed it, and the parser rejects mismatches, so a
/// CSV header can always be fed back in as a config.
pub const ARTIFACT_VERSION: u32 = 1;

/// Output-file selection: CSV always, JSON summary optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    CsvJson,
}

/// Coupling-distribution selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Standing-wave Gaussian mode sampled through the half-waist aperture.
    Masked,
    /// Same mode without the aperture (wider atomic spread).
    Unmasked,
    /// Point mass at the system coupling `g` (single fixed atom).
    Point,
}

/// Parse or constraint failure, carrying the key and source line.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {n}, key '{}': {}", self.key, self.message),
            None => write!(f, "config key '{}': {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

/// Fully resolved run configuration: every key has a documented default,
/// unknown keys are rejected, and the echoed form reproduces the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // system, in cavity-decay units
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub detuning1: f64,
    pub e1: f64,
    pub e2: f64,
    pub n_max: usize,
    // coupling-distribution geometry
    pub mask: MaskKind,
    pub g_max: f64,
    pub f_cut: f64,
    /// Aperture half-width in waist units; `None` uses the per-mask default.
    pub x_half_width: Option<f64>,
    // solver
    pub n_b: usize,
    pub tol: f64,
    pub nodes: usize,
    pub seed: u64,
    pub samples: usize,
    pub bins: usize,
    // sweeps
    pub delta_tilde: Vec<f64>,
    pub tau_w: f64,
    pub tau_grid: Vec<f64>,
    pub g_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub search_tol: f64,
    // output
    pub out_dir: String,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            g: 9.0,
            kappa: 1.0,
            gamma: 2.0,
            detuning1: 9.0,
            e1: 0.1,
            e2: 0.1,
            n_max: 4,
            mask: MaskKind::Masked,
            g_max: 10.0,
            f_cut: 0.1,
            x_half_width: None,
            n_b: 3,
            tol: 1e-9,
            nodes: 32,
            seed: 1234,
            samples: 400_000,
            bins: 64,
            delta_tilde: linspace(0.0, 4.0, 81),
            tau_w: 0.1,
            tau_grid: linspace(0.02, 1.0, 25),
            g_grid: linspace(1.0, 10.0, 19),
            gamma_grid: vec![0.2, 2.0, 5.0, 7.0, 10.0],
            tau_lo: 0.005,
            tau_hi: 2.0,
            search_tol: 1e-3,
            out_dir: "out".to_string(),
            format: OutputFormat::CsvJson,
        }
    }
}

/// Inclusive linear grid with `n` points.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * h).collect()
}

fn parse_scalar<T: std::str::FromStr>(
    key: &str,
    line: usize,
    raw: &str,
    kind: &str,
) -> Result<T, ConfigError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| err(key, Some(line), format!("expected {kind}, got '{raw}'")))
}

fn parse_grid(key: &str, line: usize, raw: &str) -> Result<Vec<f64>, ConfigError> {
    let raw = raw.trim();
    let parts: Vec<&str> = raw.split(':').collect();
    let grid = if parts.len() == 3 {
        let lo: f64 = parse_scalar(key, line, parts[0], "number")?;
        let hi: f64 = parse_scalar(key, line, parts[1], "number")?;
        let n: usize = parse_scalar(key, line, parts[2], "integer point count")?;
        if n < 2 {
            return Err(err(key, Some(line), "linspace needs n >= 2"));
        }
        linspace(lo, hi, n)
    } else if parts.len() == 1 {
        raw.split(',')
            .map(|s| parse_scalar(key, line, s, "number"))
            .collect::<Result<Vec<f64>, _>>()?
    } else {
        return Err(err(
            key,
            Some(line),
            "expected a comma list or lo:hi:n linspace",
        ));
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(err(key, Some(line), "grid must be nonempty and finite"));
    }
    Ok(grid)
}

fn fmt_grid(grid: &[f64]) -> String {
    grid.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parse a flat key-value text over the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                err(line, Some(line_no), "expected 'key = value'")
            })?;
            let key = key.trim();
            let value = value.trim();
            if let Some(first) = seen.insert(key.to_string(), line_no) {
                return Err(err(
                    key,
                    Some(line_no),
                    format!("duplicate assignment (first on line {first})"),
                ));
            }
            cfg.assign(key, value, line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn assign(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        match key {
            "g" => self.g = parse_scalar(key, line, value, "number")?,
            "kappa" => self.kappa = parse_scalar(key, line, value, "number")?,
            "gamma" => self.gamma = parse_scalar(key, line, value, "number")?,
            "detuning1" => self.detuning1 = parse_scalar(key, line, value, "number")?,
            "e1" => self.e1 = parse_scalar(key, line, value, "number")?,
            "e2" => self.e2 = parse_scalar(key, line, value, "number")?,
            "n_max" => self.n_max = parse_scalar(key, line, value, "integer")?,
            "mask" => {
                self.mask = match value {
                    "masked" => MaskKind::Masked,
                    "unmasked" => MaskKind::Unmasked,
                    "point" => MaskKind::Point,
                    other => {
                        return Err(err(
                            key,
                            Some(line),
                            format!("expected masked|unmasked|point, got '{other}'"),
                        ))
                    }
                }
            }
            "g_max" => self.g_max = parse_scalar(key, line, value, "number")?,
            "f_cut" => self.f_cut = parse_scalar(key, line, value, "number")?,
            "x_half_width" => {
                self.x_half_width = Some(parse_scalar(key, line, value, "number")?)
            }
            "n_b" => self.n_b = parse_scalar(key, line, value, "integer")?,
            "tol" => self.tol = parse_scalar(key, line, value, "number")?,
            "nodes" => self.nodes = parse_scalar(key, line, value, "integer")?,
            "seed" => self.seed = parse_scalar(key, line, value, "integer")?,
            "samples" => self.samples = parse_scalar(key, line, value, "integer")?,
            "bins" => self.bins = parse_scalar(key, line, value, "integer")?,
            "delta_tilde" => self.delta_tilde = parse_grid(key, line, value)?,
            "tau_w" => self.tau_w = parse_scalar(key, line, value, "number")?,
            "tau_grid" => self.tau_grid = parse_grid(key, line, value)?,
            "g_grid" => self.g_grid = parse_grid(key, line, value)?,
            "gamma_grid" => self.gamma_grid = parse_grid(key, line, value)?,
            "tau_lo" => self.tau_lo = parse_scalar(key, line, value, "number")?,
            "tau_hi" => self.tau_hi = parse_scalar(key, line, value, "number")?,
            "search_tol" => self.search_tol = parse_scalar(key, line, value, "number")?,
            "out_dir" => self.out_dir = value.to_string(),
            "artifact_version" => {
                let v: u32 = parse_scalar(key, line, value, "integer")?;
                if v != ARTIFACT_VERSION {
                    return Err(err(
                        key,
                        Some(line),
                        format!("file is version {v}, this build reads {ARTIFACT_VERSION}"),
                    ));
                }
            }
            "format" => {
                self.format = match value {
                    "csv" => OutputFormat::Csv,
                    "csv+json" => OutputFormat::CsvJson,
                    other => {
                        return Err(err(
                            key,
                            Some(line),
                            format!("expected csv|csv+json, got '{other}'"),
                        ))
                    }
                }
            }
            unknown => return Err(err(unknown, Some(line), "unknown key")),
        }
        Ok(())
    }

    /// Constraint checks, each naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, f64); 7] = [
            ("g", self.g),
            ("gamma", self.gamma),
            ("detuning1", self.detuning1),
            ("g_max", self.g_max),
            ("tol", self.tol),
            ("tau_w", self.tau_w),
            ("search_tol", self.search_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(err(key, None, format!("must be positive, got {v}")));
            }
        }
        if self.kappa != 1.0 {
            return Err(err(
                "kappa",
                None,
                "all rates are in cavity-decay units; kappa must be exactly 1",
            ));
        }
        for (key, v) in [("e1", self.e1), ("e2", self.e2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(err(key, None, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.f_cut > 0.0 && self.f_cut < 1.0) {
            return Err(err(
                "f_cut",
                None,
                format!("must lie strictly inside (0, 1), got {}", self.f_cut),
            ));
        }
        if let Some(w) = self.x_half_width {
            if !(w > 0.0) || !w.is_finite() {
                return Err(err(
                    "x_half_width",
                    None,
                    format!("must be positive, got {w}"),
                ));
            }
            if self.mask == MaskKind::Point {
                return Err(err(
                    "x_half_width",
                    None,
                    "only meaningful with mask = masked|unmasked",
                ));
            }
        }
        if self.n_max < 1 {
            return Err(err("n_max", None, "need at least one photon level"));
        }
        if self.n_b < 1 {
            return Err(err("n_b", None, "hierarchy order must be >= 1"));
        }
        if self.nodes < 2 {
            return Err(err("nodes", None, "need >= 2 quadrature nodes"));
        }
        if self.samples < 10_000 {
            return Err(err(
                "samples",
                None,
                format!("need >= 10000 Monte Carlo samples, got {}", self.samples),
            ));
        }
        if self.bins < 4 {
            return Err(err("bins", None, "need >= 4 histogram bins"));
        }
        if !(self.tau_lo > 0.0 && self.tau_hi > self.tau_lo) {
            return Err(err(
                "tau_lo",
                None,
                format!(
                    "bracket needs 0 < tau_lo < tau_hi, got [{}, {}]",
                    self.tau_lo, self.tau_hi
                ),
            ));
        }
        for (key, grid, min) in [
            ("tau_grid", &self.tau_grid, 0.0),
            ("g_grid", &self.g_grid, 0.0),
            ("gamma_grid", &self.gamma_grid, 0.0),
        ] {
            if grid.iter().any(|&v| !(v > min)) {
                return Err(err(key, None, "all grid values must be positive"));
            }
        }
        Ok(())
    }

    /// Serialize the effective configuration back to parseable flat text,
    /// keys sorted, one assignment per line.
    pub fn echo(&self) -> String {
        let mut pairs = self.pairs();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// (key, rendered value) pairs of the effective configuration.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("g".into(), self.g.to_string()),
            ("kappa".into(), self.kappa.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("detuning1".into(), self.detuning1.to_string()),
            ("e1".into(), self.e1.to_string()),
            ("e2".into(), self.e2.to_string()),
            ("n_max".into(), self.n_max.to_string()),
            (
                "mask".into(),
                match self.mask {
                    MaskKind::Masked => "masked",
                    MaskKind::Unmasked => "unmasked",
                    MaskKind::Point => "point",
                }
                .to_string(),
            ),
            ("g_max".into(), self.g_max.to_string()),
            ("f_cut".into(), self.f_cut.to_string()),
            ("n_b".into(), self.n_b.to_string()),
            ("tol".into(), self.tol.to_string()),
            ("nodes".into(), self.nodes.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("samples".into(), self.samples.to_string()),
            ("bins".into(), self.bins.to_string()),
            ("delta_tilde".into(), fmt_grid(&self.delta_tilde)),
            ("tau_w".into(), self.tau_w.to_string()),
            ("tau_grid".into(), fmt_grid(&self.tau_grid)),
            ("g_grid".into(), fmt_grid(&self.g_grid)),
            ("gamma_grid".into(), fmt_grid(&self.gamma_grid)),
            ("tau_lo".into(), self.tau_lo.to_string()),
            ("tau_hi".into(), self.tau_hi.to_string()),
            ("search_tol".into(), self.search_tol.to_string()),
            ("out_dir".into(), self.out_dir.clone()),
            (
                "format".into(),
                match self.format {
                    OutputFormat::Csv => "csv",
                    OutputFormat::CsvJson => "csv+json",
                }
                .to_string(),
            ),
        ];
        if let Some(w) = self.x_half_width {
            pairs.push(("x_half_width".into(), w.to_string()));
        }
        pairs
    }

    /// System parameters with the scan parked on the two-photon peak of the
    /// resonantly pumped subensemble; spectrum scans override δ per point.
    pub fn system_params(&self) -> SystemParams {
        SystemParams {
            g: self.g,
            kappa: self.kappa,
            gamma: self.gamma,
            detuning1: self.detuning1,
            delta: self.detuning1 * (1.0 + PEAK_DELTA_TILDE),
            e1: self.e1,
            e2: self.e2,
            n_max: self.n_max,
        }
    }

    /// Aperture geometry for the Monte Carlo density; `None` for point mass.
    pub fn geometry(&self) -> Option<GeometrySpec> {
        let geometry = match self.mask {
            MaskKind::Masked => Geometry::Masked,
            MaskKind::Unmasked => Geometry::Unmasked,
            MaskKind::Point => return None,
        };
        Some(match self.x_half_width {
            // validate() already bounds the width, so this cannot fail
            Some(w) => GeometrySpec::with_half_width(geometry, w).unwrap(),
            None => GeometrySpec::new(geometry),
        })
    }
}
