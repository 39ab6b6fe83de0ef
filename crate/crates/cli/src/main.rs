//! Command-line front end for the coincidence-spectrum simulator.
//!
//! Five subcommands map one-to-one onto the stages of the pipeline:
//! `distribution` reconstructs the coupling density P(g), `spectrum` scans
//! the windowed two-photon rates over the scaled detuning, `pvr-surface`
//! tabulates the peak-to-valley ratio over (g, τ_w), `opt-window` traces
//! the optimal window against the coupling, and `regression` traces it
//! against the loss ratio γ/κ with a linear fit. Every run writes CSV data
//! with the effective config in the header plus a JSON summary, and is
//! byte-reproducible from the same config and seed.

// Validation guards are written `!(x > 0.0)` on purpose: the negated form
// rejects NaN together with the out-of-range values, which `x <= 0.0`
// would silently let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{MaskKind, OutputFormat, RunConfig};
use output::{write_csv, write_summary, RunSummary, SkippedPoint};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tpcs_core::ensemble::{
    sample_coupling_distribution_with, spectrum_scan_with, CouplingDensity,
};
use tpcs_core::window::{regression_fit, tau_opt_curve, Axis, CurvePoint, PvrEngine};

#[derive(Parser)]
#[command(
    name = "tpcs",
    about = "Two-photon coincidence spectra of a driven atom-cavity system",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Flat key=value config file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the out_dir config key).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed (overrides the seed config key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reconstruct the coupling-strength density P(g) for the aperture.
    Distribution,
    /// Scan the windowed two-photon rates over the scaled detuning grid.
    Spectrum,
    /// Tabulate the peak-to-valley ratio over the (g, tau_w) grid.
    PvrSurface,
    /// Optimal window time per coupling strength on the g grid.
    OptWindow,
    /// Optimal window time per loss ratio, with a linear regression fit.
    Regression,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if std::env::var_os("NO_COLOR").is_some() {
        builder.write_style(env_logger::WriteStyle::Never);
    }
    builder.init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("thread pool already initialized: {e}");
        }
    }

    let name = match cli.cmd {
        Cmd::Distribution => "distribution",
        Cmd::Spectrum => "spectrum",
        Cmd::PvrSurface => "pvr-surface",
        Cmd::OptWindow => "opt-window",
        Cmd::Regression => "regression",
    };

    match run(&cli, name) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(message) => {
            // machine-readable failure on stderr
            eprintln!(
                "{}",
                json!({ "error": message, "subcommand": name })
            );
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli, name: &str) -> Result<Vec<PathBuf>, String> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.out_dir);

    match name {
        "distribution" => run_distribution(&cfg, &dir),
        "spectrum" => run_spectrum(&cfg, &dir),
        "pvr-surface" => run_pvr_surface(&cfg, &dir),
        "opt-window" => run_opt_window(&cfg, &dir),
        "regression" => run_regression(&cfg, &dir),
        _ => unreachable!("subcommand names are fixed above"),
    }
}

/// Build the configured coupling density: Monte Carlo for an aperture,
/// point mass at g without one.
fn density_for(cfg: &RunConfig) -> Result<CouplingDensity, String> {
    match cfg.geometry() {
        Some(spec) => sample_coupling_distribution_with(
            &spec,
            cfg.g_max,
            cfg.f_cut,
            cfg.samples,
            cfg.seed,
            cfg.bins,
            cfg.nodes,
        )
        .map_err(|e| e.to_string()),
        None => Ok(CouplingDensity::point_mass(cfg.g)),
    }
}

/// Write the CSV (always) and the JSON summary (unless format = csv).
fn emit(
    dir: &Path,
    name: &str,
    cfg: &RunConfig,
    columns: &[&str],
    rows: &[Vec<f64>],
    mut summary: RunSummary,
) -> Result<Vec<PathBuf>, String> {
    let csv = write_csv(dir, &format!("{name}.csv"), cfg, columns, rows)
        .map_err(|e| format!("writing {name}.csv: {e}"))?;
    summary.outputs.push(csv.display().to_string());
    let mut paths = vec![csv];
    if cfg.format == OutputFormat::CsvJson {
        let json = write_summary(dir, &format!("{name}.json"), &summary)
            .map_err(|e| format!("writing {name}.json: {e}"))?;
        paths.push(json);
    }
    Ok(paths)
}

fn run_distribution(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, String> {
    if cfg.mask == MaskKind::Point {
        return Err("key 'mask': distribution needs masked|unmasked, not point".into());
    }
    let density = density_for(cfg)?;
    let rows: Vec<Vec<f64>> = density.density.iter().map(|&(g, p)| vec![g, p]).collect();
    let mut summary = RunSummary::new("distribution", cfg);
    summary.points_computed = rows.len();
    summary.results = json!({
        "g_max": density.g_max,
        "f_cut": density.f_cut,
        "quadrature_nodes": density.quadrature_nodes.len(),
    });
    emit(dir, "distribution", cfg, &["g_over_kappa", "kappa_P"], &rows, summary)
}

fn run_spectrum(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, String> {
    let density = density_for(cfg)?;
    let params = cfg.system_params();
    let spectrum = spectrum_scan_with(
        &params,
        &density,
        &cfg.delta_tilde,
        cfg.tau_w,
        cfg.n_b,
        cfg.tol,
    )
    .map_err(|e| e.to_string())?;
    if spectrum.points.is_empty() {
        return Err(format!(
            "all {} scan points failed; first: {}",
            spectrum.skipped.len(),
            spectrum.skipped[0].1
        ));
    }
    let rows: Vec<Vec<f64>> = spectrum
        .points
        .iter()
        .map(|p| vec![p.delta_tilde, p.value_con, p.value_unc])
        .collect();
    let mut summary = RunSummary::new("spectrum", cfg);
    summary.points_computed = rows.len();
    summary.points_skipped = spectrum
        .skipped
        .iter()
        .map(|(at, reason)| SkippedPoint {
            at: *at,
            reason: reason.clone(),
        })
        .collect();
    let peak = spectrum
        .points
        .iter()
        .max_by(|a, b| a.value_con.total_cmp(&b.value_con))
        .expect("nonempty");
    summary.results = json!({
        "tau_w": cfg.tau_w,
        "peak": { "delta_tilde": peak.delta_tilde, "delta_con": peak.value_con, "delta_unc": peak.value_unc },
    });
    emit(
        dir,
        "spectrum",
        cfg,
        &["delta_tilde", "delta_con", "delta_unc"],
        &rows,
        summary,
    )
}

#[allow(clippy::type_complexity)]
fn run_pvr_surface(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, String> {
    use rayon::prelude::*;
    let params = cfg.system_params();
    // one engine per coupling serves every window time on the grid
    let per_g: Vec<(f64, Result<Vec<(f64, f64, f64)>, String>)> = cfg
        .g_grid
        .par_iter()
        .map(|&g| {
            let outcome = PvrEngine::with_settings(
                &params,
                &CouplingDensity::point_mass(g),
                cfg.n_b,
                cfg.tol,
            )
            .map_err(|e| e.to_string())
            .and_then(|engine| {
                cfg.tau_grid
                    .iter()
                    .map(|&tau| {
                        engine
                            .pvr_at(tau)
                            .map(|(con, unc)| (tau, con, unc))
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            });
            (g, outcome)
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (g, outcome) in per_g {
        match outcome {
            Ok(points) => {
                for (tau, con, unc) in points {
                    rows.push(vec![g, tau, con, unc]);
                }
            }
            Err(reason) => skipped.push(SkippedPoint { at: g, reason }),
        }
    }
    if rows.is_empty() {
        return Err(format!(
            "all {} couplings failed; first: {}",
            skipped.len(),
            skipped[0].reason
        ));
    }
    let mut summary = RunSummary::new("pvr-surface", cfg);
    summary.points_computed = rows.len();
    summary.points_skipped = skipped;
    summary.results = json!({
        "g_grid_len": cfg.g_grid.len(),
        "tau_grid_len": cfg.tau_grid.len(),
    });
    emit(
        dir,
        "pvr_surface",
        cfg,
        &["g_over_kappa", "kappa_tau_w", "pvr_con", "pvr_unc"],
        &rows,
        summary,
    )
}

fn curve_rows(points: &[CurvePoint]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| vec![p.axis_value, p.tau_opt_con, p.tau_opt_unc])
        .collect()
}

fn curve_json(points: &[CurvePoint]) -> serde_json::Value {
    json!(points
        .iter()
        .map(|p| json!({
            "axis": p.axis_value,
            "kappa_tau_opt_con": p.tau_opt_con,
            "kappa_tau_opt_unc": p.tau_opt_unc,
            "pvr_con": p.pvr_con,
            "pvr_unc": p.pvr_unc,
            "used_grid_fallback": p.used_grid_fallback,
        }))
        .collect::<Vec<_>>())
}

fn run_opt_window(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, String> {
    let params = cfg.system_params();
    let (points, skipped) = tau_opt_curve(Axis::G, &cfg.g_grid, &params, None)
        .map_err(|e| e.to_string())?;
    if points.is_empty() {
        return Err(format!(
            "all {} couplings failed; first: {}",
            skipped.len(),
            skipped[0].1
        ));
    }
    let mut summary = RunSummary::new("opt-window", cfg);
    summary.points_computed = points.len();
    summary.points_skipped = skipped
        .into_iter()
        .map(|(at, reason)| SkippedPoint { at, reason })
        .collect();
    summary.results = json!({ "points": curve_json(&points) });
    emit(
        dir,
        "opt_window",
        cfg,
        &["axis", "kappa_tau_opt_con", "kappa_tau_opt_unc"],
        &curve_rows(&points),
        summary,
    )
}

fn run_regression(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, String> {
    let density = density_for(cfg)?;
    let params = cfg.system_params();
    let (points, skipped) =
        tau_opt_curve(Axis::Gamma, &cfg.gamma_grid, &params, Some(&density))
            .map_err(|e| e.to_string())?;
    if points.is_empty() {
        return Err(format!(
            "all {} loss ratios failed; first: {}",
            skipped.len(),
            skipped[0].1
        ));
    }
    let fit_of = |pick: fn(&CurvePoint) -> f64| {
        let data: Vec<(f64, f64)> = points.iter().map(|p| (p.axis_value, pick(p))).collect();
        match regression_fit(&data) {
            Ok(f) => json!({
                "slope": f.slope,
                "intercept": f.intercept,
                "correlation": f.correlation,
            }),
            Err(e) => json!({ "error": e.to_string() }),
        }
    };
    let mut summary = RunSummary::new("regression", cfg);
    summary.points_computed = points.len();
    summary.points_skipped = skipped
        .into_iter()
        .map(|(at, reason)| SkippedPoint { at, reason })
        .collect();
    summary.results = json!({
        "points": curve_json(&points),
        "fit_con": fit_of(|p| p.tau_opt_con),
        "fit_unc": fit_of(|p| p.tau_opt_unc),
    });
    emit(
        dir,
        "regression",
        cfg,
        &["axis", "kappa_tau_opt_con", "kappa_tau_opt_unc"],
        &curve_rows(&points),
        summary,
    )
}
