//! Inhomogeneous coupling distributions P(g) and spectrum scans.
//!
//! An atom crossing a standing-wave Gaussian cavity mode sees a coupling
//! that depends on where it crosses:
//!
//!   g(x, z) = g_max · e^{−(x/w₀)²} · |cos(2πz/λ_c)|,
//!
//! with z uniform over a half-wavelength and x uniform over the transverse
//! aperture [−x_m, x_m] (a rectangular mask narrows x_m from 2w₀ to w₀/2,
//! concentrating the density near g_max). Both w₀ and λ_c scale out.
//! Couplings below the selection cutoff f_cut·g_max do not participate and
//! are discarded, so P(g) is supported on [f_cut·g_max, g_max].
//!
//! Ensemble observables are P(g)-weighted averages evaluated on stored
//! Gauss-Legendre nodes. The drive lasers stay locked to the resonantly
//! selected subensemble: detuning1 = g_f and δ = g_f(1 + δ̃) are held fixed
//! while g varies across the nodes, which is what makes the off-resonant
//! atoms contribute background rather than shifted peaks.

use crate::correlation::{
    delta_conditional, delta_conditional_numeric, delta_unconditional,
    delta_unconditional_numeric, G2Expander,
};
use crate::error::{CoreError, Result};
use crate::floquet::solve_bloch_steady_state;
use crate::hilbert::build_operator_set;
use crate::liouville::{build_sideband_superops_with, build_static_liouvillian_with};
use crate::numerics::gauss_legendre_on;
use crate::params::SystemParams;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::{BufRead, Write};

/// Transverse aperture selecting which mode regions atoms may cross.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Rectangular mask of half-width w₀/2: atoms pass near the mode axis.
    Masked,
    /// Open aperture of half-width 2w₀: the full Gaussian wing contributes.
    Unmasked,
}

/// Geometry plus its transverse half-width in units of w₀ (a config knob;
/// the defaults reproduce the masked/unmasked contrast).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySpec {
    pub geometry: Geometry,
    /// Aperture half-width x_m / w₀.
    pub x_half_width: f64,
}

impl GeometrySpec {
    pub fn new(geometry: Geometry) -> Self {
        let x_half_width = match geometry {
            Geometry::Masked => 0.5,
            Geometry::Unmasked => 2.0,
        };
        GeometrySpec {
            geometry,
            x_half_width,
        }
    }

    pub fn with_half_width(geometry: Geometry, x_half_width: f64) -> Result<Self> {
        if !(x_half_width > 0.0) || !x_half_width.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "aperture half-width must be positive and finite, got {x_half_width}"
            )));
        }
        Ok(GeometrySpec {
            geometry,
            x_half_width,
        })
    }
}

/// Tabulated coupling density with its quadrature rule.
///
/// `quadrature_nodes` hold (g, weight) with the density already folded into
/// the weights and Σ weights = 1, so an ensemble average is a plain
/// weighted sum over the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingDensity {
    pub g_max: f64,
    /// Lower support bound as a fraction of g_max (1 for a point mass).
    pub f_cut: f64,
    /// (g, P(g)) at histogram bin centers, strictly increasing in g.
    pub density: Vec<(f64, f64)>,
    /// (g, weight) Gauss-Legendre nodes; weights sum to 1.
    pub quadrature_nodes: Vec<(f64, f64)>,
}

impl CouplingDensity {
    /// Degenerate distribution δ(g − g₀): one node of weight 1, so every
    /// ensemble average collapses to the single-g value exactly.
    pub fn point_mass(g0: f64) -> Self {
        CouplingDensity {
            g_max: g0,
            f_cut: 1.0,
            density: vec![(g0, f64::INFINITY)],
            quadrature_nodes: vec![(g0, 1.0)],
        }
    }

    pub fn is_point_mass(&self) -> bool {
        self.quadrature_nodes.len() == 1
    }

    /// P(g) by linear interpolation of the table, 0 outside the support.
    pub fn density_at(&self, g: f64) -> f64 {
        interp_table(&self.density, g)
    }
}

fn interp_table(table: &[(f64, f64)], g: f64) -> f64 {
    match table {
        [] => 0.0,
        [(g0, p0)] => {
            if g == *g0 {
                *p0
            } else {
                0.0
            }
        }
        _ => {
            let (first, last) = (table[0], table[table.len() - 1]);
            if g < first.0 || g > last.0 {
                return 0.0;
            }
            let idx = table.partition_point(|(gi, _)| *gi <= g);
            if idx == 0 {
                return first.1;
            }
            if idx == table.len() {
                return last.1;
            }
            let (ga, pa) = table[idx - 1];
            let (gb, pb) = table[idx];
            pa + (pb - pa) * (g - ga) / (gb - ga)
        }
    }
}

/// Default number of Gauss-Legendre nodes laid over the support.
pub const DEFAULT_QUADRATURE_NODES: usize = 32;

/// Monte Carlo reconstruction of P(g) for the given aperture; see the
/// module docs for the sampled geometry. Deterministic for a given seed.
pub fn sample_coupling_distribution(
    geometry: &GeometrySpec,
    g_max: f64,
    f_cut: f64,
    samples: usize,
    seed: u64,
    bins: usize,
) -> Result<CouplingDensity> {
    sample_coupling_distribution_with(
        geometry,
        g_max,
        f_cut,
        samples,
        seed,
        bins,
        DEFAULT_QUADRATURE_NODES,
    )
}

/// [`sample_coupling_distribution`] with an explicit quadrature node count.
pub fn sample_coupling_distribution_with(
    geometry: &GeometrySpec,
    g_max: f64,
    f_cut: f64,
    samples: usize,
    seed: u64,
    bins: usize,
    nodes: usize,
) -> Result<CouplingDensity> {
    if !(g_max > 0.0) || !g_max.is_finite() {
        return Err(CoreError::InvalidParams(format!(
            "g_max must be positive and finite, got {g_max}"
        )));
    }
    if !(f_cut > 0.0 && f_cut < 1.0) {
        return Err(CoreError::InvalidParams(format!(
            "f_cut must lie in (0, 1), got {f_cut}"
        )));
    }
    if samples < 10_000 {
        return Err(CoreError::InvalidParams(format!(
            "need at least 1e4 Monte Carlo samples for a usable histogram, got {samples}"
        )));
    }
    if bins < 4 || nodes < 2 {
        return Err(CoreError::InvalidParams(format!(
            "need bins >= 4 and nodes >= 2, got {bins} and {nodes}"
        )));
    }

    let g_lo = f_cut * g_max;
    let bin_width = (g_max - g_lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut kept = 0u64;
    let xm = geometry.x_half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let u: f64 = rng.gen_range(-xm..xm);
        let v: f64 = rng.gen_range(0.0..0.5);
        let g = g_max * (-u * u).exp() * (2.0 * std::f64::consts::PI * v).cos().abs();
        if g < g_lo {
            continue;
        }
        // g = g_max lands in the top bin
        let b = (((g - g_lo) / bin_width) as usize).min(bins - 1);
        counts[b] += 1;
        kept += 1;
    }
    if kept == 0 {
        return Err(CoreError::EmptyDensity { f_cut });
    }

    // normalized histogram: the step function integrates to exactly 1
    let density: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let center = g_lo + (b as f64 + 0.5) * bin_width;
            (center, c as f64 / (kept as f64 * bin_width))
        })
        .collect();

    // quadrature: GL nodes against the interpolated density, then weights
    // renormalized so that averaging the constant 1 gives exactly 1
    let (gs, ws) = gauss_legendre_on(nodes, g_lo, g_max);
    let mut quadrature_nodes: Vec<(f64, f64)> = gs
        .iter()
        .zip(&ws)
        .map(|(&g, &w)| (g, w * interp_table(&density, g)))
        .collect();
    let total: f64 = quadrature_nodes.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(CoreError::EmptyDensity { f_cut });
    }
    for (_, w) in &mut quadrature_nodes {
        *w /= total;
    }

    Ok(CouplingDensity {
        g_max,
        f_cut,
        density,
        quadrature_nodes,
    })
}

/// P(g)-weighted average of a scalar quantity over the stored nodes.
/// Linear in the integrand; a failing integrand aborts with the node's g.
pub fn average_over_g<F>(mut quantity: F, density: &CouplingDensity) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut acc = 0.0;
    for &(g, w) in &density.quadrature_nodes {
        let v = quantity(g).map_err(|e| CoreError::IntegrandFailure {
            g,
            source: Box::new(e),
        })?;
        acc += w * v;
    }
    Ok(acc)
}

/// One scan point: windowed rates at a normalized scan detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub delta_tilde: f64,
    pub value_con: f64,
    pub value_unc: f64,
}

/// Two-photon count rate spectrum over the normalized detuning δ̃.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Points sorted by strictly increasing δ̃.
    pub points: Vec<SpectrumPoint>,
    /// Input parameters of the scan (per-point δ overrides the snapshot).
    pub params_snapshot: SystemParams,
    /// (δ̃, reason) for grid points dropped by per-point solver failures.
    pub skipped: Vec<(f64, String)>,
}

/// Hierarchy truncation used by scans when not overridden.
pub const DEFAULT_N_B: usize = 3;
/// Hierarchy residual tolerance used by scans when not overridden.
pub const DEFAULT_MCF_TOL: f64 = 1e-9;

/// Scan the windowed two-photon rates over a δ̃ grid with default solver
/// settings (N_B = 3, residual tol 1e-9).
pub fn spectrum_scan(
    params: &SystemParams,
    density: &CouplingDensity,
    delta_tilde_grid: &[f64],
    tau_w: f64,
) -> Result<Spectrum> {
    spectrum_scan_with(
        params,
        density,
        delta_tilde_grid,
        tau_w,
        DEFAULT_N_B,
        DEFAULT_MCF_TOL,
    )
}

/// [`spectrum_scan`] with explicit hierarchy truncation and tolerance.
///
/// For each δ̃ the scanning field is set to δ = detuning1·(1 + δ̃), the
/// bichromatic steady state is solved per quadrature node g, the windowed
/// rates are evaluated from the eigen-expansion (numeric quadrature as the
/// documented fallback), and the node values are averaged with the density
/// weights. Nodes run in parallel; the merge is in grid-index order, so the
/// output is deterministic. A solver failure drops only its grid point.
pub fn spectrum_scan_with(
    params: &SystemParams,
    density: &CouplingDensity,
    delta_tilde_grid: &[f64],
    tau_w: f64,
    n_b: usize,
    tol: f64,
) -> Result<Spectrum> {
    params.validate()?;
    if delta_tilde_grid.is_empty() {
        return Err(CoreError::InvalidParams("empty delta_tilde grid".into()));
    }
    if !(tau_w > 0.0) {
        return Err(CoreError::InvalidParams(format!(
            "window time must be positive, got {tau_w}"
        )));
    }
    let mut order: Vec<usize> = (0..delta_tilde_grid.len()).collect();
    order.sort_by(|&i, &j| delta_tilde_grid[i].total_cmp(&delta_tilde_grid[j]));
    for pair in order.windows(2) {
        if delta_tilde_grid[pair[0]] == delta_tilde_grid[pair[1]] {
            return Err(CoreError::InvalidParams(format!(
                "duplicate delta_tilde grid value {}",
                delta_tilde_grid[pair[0]]
            )));
        }
    }

    // per-node: one operator set, one static generator, one eigendecomposition
    // serve every grid point (the static generator does not depend on δ)
    type NodeValues = Vec<std::result::Result<(f64, f64), String>>;
    let node_results: Vec<NodeValues> = density
        .quadrature_nodes
        .par_iter()
        .map(|&(g, _)| {
            let p_g = SystemParams {
                g,
                ..params.clone()
            };
            scan_one_coupling(&p_g, delta_tilde_grid, tau_w, n_b, tol)
                .unwrap_or_else(|e| {
                    vec![Err(format!("g = {g}: {e}")); delta_tilde_grid.len()]
                })
        })
        .collect();

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &j in &order {
        let dt = delta_tilde_grid[j];
        let mut con = 0.0;
        let mut unc = 0.0;
        let mut errors: Vec<String> = Vec::new();
        for (node, &(_, w)) in node_results.iter().zip(&density.quadrature_nodes) {
            match &node[j] {
                Ok((c, u)) => {
                    con += w * c;
                    unc += w * u;
                }
                Err(e) => errors.push(e.clone()),
            }
        }
        if errors.is_empty() {
            points.push(SpectrumPoint {
                delta_tilde: dt,
                // rates are averages of G² ≥ 0; only rounding can go below
                value_con: con.max(0.0),
                value_unc: unc.max(0.0),
            });
        } else {
            errors.dedup();
            skipped.push((dt, errors.join("; ")));
        }
    }
    Ok(Spectrum {
        points,
        params_snapshot: params.clone(),
        skipped,
    })
}

/// Windowed rates at every grid point for one coupling strength; an error
/// from this level poisons the whole node.
fn scan_one_coupling(
    p_g: &SystemParams,
    delta_tilde_grid: &[f64],
    tau_w: f64,
    n_b: usize,
    tol: f64,
) -> Result<Vec<std::result::Result<(f64, f64), String>>> {
    let ops = build_operator_set(p_g.n_max);
    let l = build_static_liouvillian_with(&ops, p_g);
    let (s_up, s_down) = build_sideband_superops_with(&ops, p_g);
    let expander = G2Expander::new(&l, &ops)?;

    // without a scanning drive every point reduces to the static background
    if p_g.e2 == 0.0 {
        let rho_ss = expander.rho_ss().clone();
        let value = rates_with_fallback(&expander, &l, &ops, &rho_ss, tau_w);
        return Ok(vec![Ok(value); delta_tilde_grid.len()]);
    }

    Ok(delta_tilde_grid
        .iter()
        .map(|&dt| {
            let delta = p_g.detuning1 * (1.0 + dt);
            let p_point = SystemParams {
                delta,
                ..p_g.clone()
            };
            solve_bloch_steady_state(&l, &s_up, &s_down, p_point.delta, n_b, tol)
                .map(|h| {
                    rates_with_fallback(&expander, &l, &ops, h.dc_component(), tau_w)
                })
                .map_err(|e| format!("g = {}: {e}", p_g.g))
        })
        .collect())
}

/// Closed-form rates from the eigen-expansion; direct numeric quadrature
/// when the eigenbasis cannot reconstruct the propagation.
fn rates_with_fallback(
    expander: &G2Expander,
    l: &crate::liouville::Superoperator,
    ops: &crate::hilbert::OperatorSet,
    rho_init: &ndarray::Array2<crate::C64>,
    tau_w: f64,
) -> (f64, f64) {
    match expander.expand(rho_init) {
        Ok(coeffs) => (
            delta_conditional(&coeffs, tau_w),
            delta_unconditional(&coeffs, tau_w),
        ),
        Err(CoreError::IllConditionedEigenbasis { residual }) => {
            log::warn!(
                "eigen-expansion residual {residual:.3e}: falling back to numeric quadrature"
            );
            (
                delta_conditional_numeric(l, ops, rho_init, tau_w),
                delta_unconditional_numeric(l, ops, rho_init, tau_w),
            )
        }
        Err(e) => {
            // expansion can only fail on dimension mismatch beyond the
            // ill-conditioned case, and dimensions are fixed by this module
            unreachable!("G2 expansion failed: {e}")
        }
    }
}

/// Pointwise difference of two spectra on the same δ̃ grid, clamped at 0.
/// Returns the subtracted spectrum and how many points were clamped.
pub fn background_subtract(
    bichromatic: &Spectrum,
    monochromatic: &Spectrum,
) -> Result<(Spectrum, usize)> {
    if bichromatic.points.len() != monochromatic.points.len() {
        return Err(CoreError::GridMismatch(format!(
            "{} vs {} points",
            bichromatic.points.len(),
            monochromatic.points.len()
        )));
    }
    let mut clamped = 0usize;
    let mut points = Vec::with_capacity(bichromatic.points.len());
    for (b, m) in bichromatic.points.iter().zip(&monochromatic.points) {
        if b.delta_tilde != m.delta_tilde {
            return Err(CoreError::GridMismatch(format!(
                "delta_tilde {} vs {}",
                b.delta_tilde, m.delta_tilde
            )));
        }
        let con = b.value_con - m.value_con;
        let unc = b.value_unc - m.value_unc;
        if con < 0.0 || unc < 0.0 {
            clamped += 1;
        }
        points.push(SpectrumPoint {
            delta_tilde: b.delta_tilde,
            value_con: con.max(0.0),
            value_unc: unc.max(0.0),
        });
    }
    Ok((
        Spectrum {
            points,
            params_snapshot: bichromatic.params_snapshot.clone(),
            skipped: Vec::new(),
        },
        clamped,
    ))
}

/// Export the tabulated density as two-column text (g/κ, κ·P), with the
/// support bounds in comment headers.
pub fn write_density<W: Write>(density: &CouplingDensity, out: &mut W) -> Result<()> {
    writeln!(out, "# g_max = {}", density.g_max)?;
    writeln!(out, "# f_cut = {}", density.f_cut)?;
    for &(g, p) in &density.density {
        writeln!(out, "{g} {p}")?;
    }
    Ok(())
}

/// Import a density written by [`write_density`]; the quadrature nodes are
/// rebuilt over the recorded support.
pub fn read_density<R: BufRead>(input: R) -> Result<CouplingDensity> {
    read_density_with(input, DEFAULT_QUADRATURE_NODES)
}

/// [`read_density`] with an explicit quadrature node count.
pub fn read_density_with<R: BufRead>(input: R, nodes: usize) -> Result<CouplingDensity> {
    let mut g_max: Option<f64> = None;
    let mut f_cut: Option<f64> = None;
    let mut density: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                match key.trim() {
                    "g_max" => g_max = value.trim().parse().ok(),
                    "f_cut" => f_cut = value.trim().parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse = |field: Option<&str>| -> Result<f64> {
            field
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    CoreError::InvalidParams(format!(
                        "density line {}: expected two numbers, got {line:?}",
                        lineno + 1
                    ))
                })
        };
        let g = parse(fields.next())?;
        let p = parse(fields.next())?;
        if p < 0.0 {
            return Err(CoreError::InvalidParams(format!(
                "density line {}: negative density {p}",
                lineno + 1
            )));
        }
        if let Some(&(prev, _)) = density.last() {
            if g <= prev {
                return Err(CoreError::InvalidParams(format!(
                    "density line {}: g values must increase (got {g} after {prev})",
                    lineno + 1
                )));
            }
        }
        density.push((g, p));
    }
    if density.len() < 2 {
        return Err(CoreError::InvalidParams(
            "density table needs at least two rows".into(),
        ));
    }
    let g_max = g_max.unwrap_or(density.last().unwrap().0);
    let f_cut = f_cut.unwrap_or(density[0].0 / g_max);
    let g_lo = f_cut * g_max;

    let (gs, ws) = gauss_legendre_on(nodes, g_lo, g_max);
    let mut quadrature_nodes: Vec<(f64, f64)> = gs
        .iter()
        .zip(&ws)
        .map(|(&g, &w)| (g, w * interp_table(&density, g)))
        .collect();
    let total: f64 = quadrature_nodes.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(CoreError::EmptyDensity { f_cut });
    }
    for (_, w) in &mut quadrature_nodes {
        *w /= total;
    }
    Ok(CouplingDensity {
        g_max,
        f_cut,
        density,
        quadrature_nodes,
    })
}
