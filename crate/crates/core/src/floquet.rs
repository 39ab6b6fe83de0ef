//! Long-time state of the bichromatically driven system.
//!
//! After transients decay the density matrix settles onto the drive period:
//! ρ(t) = Σ_N ρ_N e^{iNδt}. Matching e^{iNδt} coefficients of the master
//! equation turns the steady-state condition into a three-term block
//! recurrence
//!
//!   A_N ρ_N + S_up ρ_{N+1} + S_down ρ_{N−1} = 0,   A_N = L_static − iNδ·Id,
//!
//! truncated at |N| = N_B and solved by matrix continued fractions: ratio
//! matrices R with ρ_{±N} = R_{±N} ρ_{±(N−1)} eliminate the wings, leaving a
//! central system for ρ₀ that is closed with the trace-1 constraint.
//!
//! The sum over harmonics runs over both signs; ρ_{−N} = ρ_N† is *checked*
//! rather than imposed, making it a solver-correctness signal.
//!
//! [`integrate_master_equation`] provides the brute-force RK4 oracle used to
//! validate the continued-fraction solution.

use crate::error::{CoreError, Result};
use crate::liouville::{
    build_sideband_superops, build_static_liouvillian, devectorize, trace_row, vectorize,
    Superoperator,
};
use crate::numerics::matrix_one_norm;
use crate::params::SystemParams;
use crate::C64;
use ndarray::{Array1, Array2};
use ndarray_linalg::{Inverse, Solve};

/// Harmonic components ρ_N, N ∈ [−N_B, N_B], of the long-time state.
#[derive(Debug, Clone)]
pub struct BlochHierarchy {
    /// Truncation order N_B.
    pub n_harmonics: usize,
    /// Components indexed by N + N_B.
    components: Vec<Array2<C64>>,
    /// Largest hierarchy-equation residual left by the solve (diagnostic).
    pub residual: f64,
}

impl BlochHierarchy {
    /// Component ρ_N, or None outside the truncation.
    pub fn component(&self, n: i64) -> Option<&Array2<C64>> {
        let nb = self.n_harmonics as i64;
        if n < -nb || n > nb {
            return None;
        }
        Some(&self.components[(n + nb) as usize])
    }

    /// The DC component ρ₀ (trace 1).
    pub fn dc_component(&self) -> &Array2<C64> {
        &self.components[self.n_harmonics]
    }

    /// Reconstruct ρ(t) = Σ_N ρ_N e^{iNδt}.
    pub fn reconstruct_at(&self, delta: f64, t: f64) -> Array2<C64> {
        let nb = self.n_harmonics as i64;
        let d = self.dc_component().nrows();
        let mut rho = Array2::<C64>::zeros((d, d));
        for n in -nb..=nb {
            let phase = C64::new(0.0, n as f64 * delta * t).exp();
            rho = rho + self.component(n).unwrap().mapv(|z| phase * z);
        }
        rho
    }
}

/// A_N = L_static − iNδ·Id.
fn shifted_block(l_static: &Superoperator, delta: f64, n: i64) -> Array2<C64> {
    let mut m = l_static.matrix.clone();
    let shift = C64::new(0.0, -(n as f64) * delta);
    for k in 0..l_static.dim() {
        m[(k, k)] += shift;
    }
    m
}

/// Invert with a cheap 1-norm condition estimate; fails above 1e12.
fn checked_inverse(m: &Array2<C64>, context: &str) -> Result<Array2<C64>> {
    let inv = m
        .inv()
        .map_err(|e| CoreError::SingularSteadyState(format!("{context}: {e}")))?;
    let cond = matrix_one_norm(m) * matrix_one_norm(&inv);
    log::debug!("{context}: cond_1 ~ {cond:.3e}");
    if cond > 1e12 {
        return Err(CoreError::SingularSteadyState(format!(
            "{context}: condition number {cond:.3e} exceeds 1e12"
        )));
    }
    Ok(inv)
}

/// Solve the truncated hierarchy by matrix continued fractions.
///
/// Ratio matrices are seeded with R_{±(N_B+1)} = 0 and recur inward; the
/// central system (A₀ + S_up R₊₁ + S_down R₋₁)ρ₀ = 0 is closed by replacing
/// the row of the |0,g⟩⟨0,g| diagonal entry (a fixed, documented choice)
/// with the trace functional. Every hierarchy equation's residual must come
/// out ≤ `tol` or the solve reports failure.
pub fn solve_bloch_steady_state(
    l_static: &Superoperator,
    s_up: &Superoperator,
    s_down: &Superoperator,
    delta: f64,
    n_b: usize,
    tol: f64,
) -> Result<BlochHierarchy> {
    if n_b < 1 {
        return Err(CoreError::InvalidParams("n_b must be >= 1".into()));
    }
    if delta == 0.0 {
        return Err(CoreError::InvalidParams(
            "delta must be nonzero for a harmonic expansion".into(),
        ));
    }
    let d2 = l_static.dim();
    for s in [s_up, s_down] {
        if s.dim() != d2 {
            return Err(CoreError::DimensionMismatch {
                expected: d2,
                got: s.dim(),
            });
        }
    }

    // ratio matrices R_up[N]: rho_N = R_up[N] · rho_{N−1}, N = 1..=N_B
    let mut r_up: Vec<Array2<C64>> = vec![Array2::zeros((d2, d2)); n_b + 1];
    let mut r = Array2::<C64>::zeros((d2, d2));
    for n in (1..=n_b as i64).rev() {
        let m = shifted_block(l_static, delta, n) + s_up.matrix.dot(&r);
        let inv = checked_inverse(&m, &format!("upward ratio at N = {n}"))?;
        r = inv.dot(&s_down.matrix).mapv(|z| -z);
        r_up[n as usize] = r.clone();
    }

    // R_dn[N]: rho_{−N} = R_dn[N] · rho_{−(N−1)}
    let mut r_dn: Vec<Array2<C64>> = vec![Array2::zeros((d2, d2)); n_b + 1];
    let mut r = Array2::<C64>::zeros((d2, d2));
    for n in (1..=n_b as i64).rev() {
        let m = shifted_block(l_static, delta, -n) + s_down.matrix.dot(&r);
        let inv = checked_inverse(&m, &format!("downward ratio at N = −{n}"))?;
        r = inv.dot(&s_up.matrix).mapv(|z| -z);
        r_dn[n as usize] = r.clone();
    }

    // central system, trace row replacing the |0,g⟩⟨0,g| row (index 0: that
    // entry is diagonal, so the replacement removes no independent equation)
    let mut central = shifted_block(l_static, delta, 0)
        + s_up.matrix.dot(&r_up[1])
        + s_down.matrix.dot(&r_dn[1]);
    let tr = trace_row(l_static.dim_rho);
    central.row_mut(0).assign(&tr);
    let mut rhs = Array1::<C64>::zeros(d2);
    rhs[0] = C64::new(1.0, 0.0);
    let v0 = central
        .solve(&rhs)
        .map_err(|e| CoreError::SingularSteadyState(format!("central block: {e}")))?;

    // wings by forward substitution
    let mut vs: Vec<Array1<C64>> = vec![Array1::zeros(d2); 2 * n_b + 1];
    vs[n_b] = v0;
    for n in 1..=n_b {
        vs[n_b + n] = r_up[n].dot(&vs[n_b + n - 1]);
        vs[n_b - n] = r_dn[n].dot(&vs[n_b - n + 1]);
    }

    // residual of every hierarchy equation (missing neighbors are zero)
    let zero = Array1::<C64>::zeros(d2);
    let mut worst = 0.0_f64;
    let mut worst_n = 0i64;
    for n in -(n_b as i64)..=(n_b as i64) {
        let idx = (n + n_b as i64) as usize;
        let up_neighbor = if idx + 1 < vs.len() { &vs[idx + 1] } else { &zero };
        let dn_neighbor = if idx >= 1 { &vs[idx - 1] } else { &zero };
        let resid = shifted_block(l_static, delta, n).dot(&vs[idx])
            + s_up.matrix.dot(up_neighbor)
            + s_down.matrix.dot(dn_neighbor);
        let r = resid.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if r > worst {
            worst = r;
            worst_n = n;
        }
    }
    if worst > tol {
        return Err(CoreError::ResidualTooLarge {
            residual: worst,
            tol,
            harmonic: worst_n,
        });
    }

    let d = l_static.dim_rho;
    Ok(BlochHierarchy {
        n_harmonics: n_b,
        components: vs.iter().map(|v| devectorize(v, d)).collect(),
        residual: worst,
    })
}

/// Solve at N_B and at 2·N_B; report the entrywise ρ₀ change. A change above
/// `tol` means the harmonic truncation has not converged.
pub fn solve_with_convergence_check(
    l_static: &Superoperator,
    s_up: &Superoperator,
    s_down: &Superoperator,
    delta: f64,
    n_b: usize,
    tol: f64,
) -> Result<(BlochHierarchy, f64)> {
    let base = solve_bloch_steady_state(l_static, s_up, s_down, delta, n_b, tol)?;
    let doubled = solve_bloch_steady_state(l_static, s_up, s_down, delta, 2 * n_b, tol)?;
    let diff = base.dc_component() - doubled.dc_component();
    let change = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if change > tol {
        return Err(CoreError::HarmonicTruncation { change, tol });
    }
    Ok((base, change))
}

/// Density-matrix samples from the fixed-step integration oracle.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array2<C64>>,
    pub dt: f64,
}

impl Trajectory {
    /// Expectation values Tr(op·ρ) along the trajectory.
    pub fn expect(&self, op: &Array2<C64>) -> Vec<C64> {
        self.states
            .iter()
            .map(|rho| op.dot(rho).diag().iter().sum())
            .collect()
    }
}

/// Fixed-step classical RK4 integration of the full time-dependent master
/// equation, sampling every `sample_every` steps (the initial state is
/// sample 0; the final step is always included). Trace drift beyond 1e-9
/// reports step-size instability.
pub fn integrate_master_equation(
    params: &SystemParams,
    rho0: &Array2<C64>,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(CoreError::InvalidParams(
            "dt and t_end must be positive".into(),
        ));
    }
    if sample_every == 0 {
        return Err(CoreError::InvalidParams("sample_every must be >= 1".into()));
    }
    let d = params.dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            got: rho0.nrows(),
        });
    }
    let l = build_static_liouvillian(params);
    let (s_up, s_down) = build_sideband_superops(params);
    let delta = params.delta;

    let deriv = |t: f64, v: &Array1<C64>| -> Array1<C64> {
        let mut dv = l.matrix.dot(v);
        if params.e2 != 0.0 {
            let up = C64::new(0.0, -delta * t).exp();
            let down = C64::new(0.0, delta * t).exp();
            dv = dv + s_up.matrix.dot(v).mapv(|z| up * z) + s_down.matrix.dot(v).mapv(|z| down * z);
        }
        dv
    };

    let trace_of = |v: &Array1<C64>| -> C64 { (0..d).map(|k| v[k * d + k]).sum() };

    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let mut v = vectorize(rho0);
    let tr0 = trace_of(&v);

    let mut times = Vec::with_capacity(n_steps / sample_every + 2);
    let mut states = Vec::with_capacity(n_steps / sample_every + 2);
    times.push(0.0);
    states.push(rho0.clone());

    const DRIFT_TOL: f64 = 1e-9;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let k1 = deriv(t, &v);
        let k2 = deriv(t + 0.5 * dt, &(&v + &k1.mapv(|z| 0.5 * dt * z)));
        let k3 = deriv(t + 0.5 * dt, &(&v + &k2.mapv(|z| 0.5 * dt * z)));
        let k4 = deriv(t + dt, &(&v + &k3.mapv(|z| dt * z)));
        let incr = (k1 + k2.mapv(|z| 2.0 * z) + k3.mapv(|z| 2.0 * z) + k4).mapv(|z| dt / 6.0 * z);
        v += &incr;

        let drift = (trace_of(&v) - tr0).norm();
        let t_next = (step + 1) as f64 * dt;
        if drift > DRIFT_TOL {
            return Err(CoreError::TraceDrift {
                drift,
                tol: DRIFT_TOL,
                t: t_next,
            });
        }
        if (step + 1) % sample_every == 0 || step + 1 == n_steps {
            times.push(t_next);
            states.push(devectorize(&v, d));
        }
    }
    Ok(Trajectory { times, states, dt })
}

/// Rectangle-rule Fourier extraction of ρ_N from uniform samples covering
/// exactly one drive period: (1/M) Σ_k ρ(t_k) e^{−iNδt_k}. For a periodic
/// trajectory the rectangle rule is spectrally accurate, so this serves as
/// an oracle for the continued-fraction components.
pub fn harmonic_from_samples(
    states: &[Array2<C64>],
    times: &[f64],
    delta: f64,
    n: i64,
) -> Array2<C64> {
    assert_eq!(states.len(), times.len());
    assert!(!states.is_empty());
    let d = states[0].nrows();
    let mut acc = Array2::<C64>::zeros((d, d));
    for (rho, &t) in states.iter().zip(times) {
        let phase = C64::new(0.0, -(n as f64) * delta * t).exp();
        acc = acc + rho.mapv(|z| phase * z);
    }
    acc.mapv(|z| z / states.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_operator_set, conj_transpose};
    use crate::numerics::max_abs;
    use ndarray_linalg::{Eigh, UPLO};

    fn defaults() -> (SystemParams, Superoperator, Superoperator, Superoperator) {
        let p = SystemParams::default();
        let l = build_static_liouvillian(&p);
        let (up, down) = build_sideband_superops(&p);
        (p, l, up, down)
    }

    #[test]
    fn no_sidebands_reduces_to_static_steady_state() {
        let p = SystemParams {
            e2: 0.0,
            ..Default::default()
        };
        let l = build_static_liouvillian(&p);
        let (up, down) = build_sideband_superops(&p);
        let h = solve_bloch_steady_state(&l, &up, &down, p.delta, 3, 1e-8).unwrap();
        // all wings vanish
        for n in 1..=3i64 {
            assert!(max_abs(h.component(n).unwrap()) < 1e-14);
            assert!(max_abs(h.component(-n).unwrap()) < 1e-14);
        }
        // rho0 is the null vector of L_static with trace 1
        let image = l.apply(h.dc_component()).unwrap();
        assert!(max_abs(&image) < 1e-10);
        let tr: C64 = h.dc_component().diag().iter().sum();
        assert!((tr - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn hierarchy_components_satisfy_conjugation_and_traces() {
        let (p, l, up, down) = defaults();
        let h = solve_bloch_steady_state(&l, &up, &down, p.delta, 3, 1e-8).unwrap();

        // rho_{-N} = rho_N† (checked, not imposed)
        for n in 1..=3i64 {
            let dag = conj_transpose(h.component(n).unwrap());
            let diff = &dag - h.component(-n).unwrap();
            assert!(max_abs(&diff) <= 1e-10, "N = {n}");
        }
        // rho0 Hermitian, trace 1; wings traceless
        let dc = h.dc_component();
        let herm_defect = dc - &conj_transpose(dc);
        assert!(max_abs(&herm_defect) <= 1e-10);
        let tr: C64 = dc.diag().iter().sum();
        assert!((tr - C64::new(1.0, 0.0)).norm() <= 1e-12);
        for n in 1..=3i64 {
            let tr_n: C64 = h.component(n).unwrap().diag().iter().sum();
            assert!(tr_n.norm() <= 1e-10, "N = {n}");
        }
        // rho0 positive semidefinite within tolerance
        let herm = dc.mapv(|z| 0.5 * z) + conj_transpose(dc).mapv(|z| 0.5 * z);
        let (eigs, _) = herm.eigh(UPLO::Lower).unwrap();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
        // solver reports its residual
        assert!(h.residual <= 1e-8);
    }

    #[test]
    fn hierarchy_residuals_recomputed_independently() {
        let (p, l, up, down) = defaults();
        let n_b = 3usize;
        let h = solve_bloch_steady_state(&l, &up, &down, p.delta, n_b, 1e-8).unwrap();
        let zero = Array2::<C64>::zeros((p.dim(), p.dim()));
        for n in -(n_b as i64)..=(n_b as i64) {
            let rho_n = h.component(n).unwrap();
            let rho_up = h.component(n + 1).unwrap_or(&zero);
            let rho_dn = h.component(n - 1).unwrap_or(&zero);
            let mut resid = l.apply(rho_n).unwrap()
                + up.apply(rho_up).unwrap()
                + down.apply(rho_dn).unwrap();
            let phase = C64::new(0.0, -(n as f64) * p.delta);
            resid = resid + rho_n.mapv(|z| phase * z);
            assert!(max_abs(&resid) <= 1e-8, "equation N = {n}");
        }
    }

    #[test]
    fn truncation_converged_at_default_order() {
        let (p, l, up, down) = defaults();
        let (h, change) =
            solve_with_convergence_check(&l, &up, &down, p.delta, 3, 1e-8).unwrap();
        assert!(change < 1e-8, "doubling N_B moved rho0 by {change}");
        assert_eq!(h.n_harmonics, 3);
    }

    #[test]
    fn rejects_zero_delta_and_zero_order() {
        let (_, l, up, down) = defaults();
        assert!(solve_bloch_steady_state(&l, &up, &down, 0.0, 3, 1e-8).is_err());
        assert!(solve_bloch_steady_state(&l, &up, &down, 30.0, 0, 1e-8).is_err());
    }

    #[test]
    fn mean_photon_number_positive_under_drive() {
        let (p, l, up, down) = defaults();
        let h = solve_bloch_steady_state(&l, &up, &down, p.delta, 3, 1e-8).unwrap();
        let ops = build_operator_set(p.n_max);
        let n_mean: C64 = ops.number.dot(h.dc_component()).diag().iter().sum();
        assert!(n_mean.re > 0.0 && n_mean.im.abs() < 1e-12);
    }

    #[test]
    fn rk4_preserves_trace_on_defaults() {
        let p = SystemParams::default();
        let d = p.dim();
        let mut rho0 = Array2::<C64>::zeros((d, d));
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let traj = integrate_master_equation(&p, &rho0, 2.0, 5e-4, 100).unwrap();
        for rho in &traj.states {
            let tr: C64 = rho.diag().iter().sum();
            assert!((tr - C64::new(1.0, 0.0)).norm() <= 1e-9);
        }
    }

    #[test]
    fn rk4_reproduces_cavity_decay_law() {
        let p = SystemParams {
            g: 0.0,
            e1: 0.0,
            e2: 0.0,
            gamma: 0.0,
            ..Default::default()
        };
        let d = p.dim();
        let mut rho0 = Array2::<C64>::zeros((d, d));
        rho0[(4, 4)] = C64::new(1.0, 0.0); // |2, g⟩
        let traj = integrate_master_equation(&p, &rho0, 1.0, 1e-3, 200).unwrap();
        let ops = build_operator_set(p.n_max);
        let n_means = traj.expect(&ops.number);
        for (t, n) in traj.times.iter().zip(&n_means) {
            let want = 2.0 * (-2.0 * t).exp();
            assert!((n.re - want).abs() < 1e-8, "t={t}: {} vs {want}", n.re);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = SystemParams::default();
        let d = p.dim();
        let mut rho0 = Array2::<C64>::zeros((d, d));
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let t_end = 0.5;
        let run = |dt: f64| {
            integrate_master_equation(&p, &rho0, t_end, dt, usize::MAX)
                .unwrap()
                .states
                .pop()
                .unwrap()
        };
        let coarse = run(2e-3);
        let fine = run(1e-3);
        let reference = run(2.5e-4);
        let err_coarse = max_abs(&(&coarse - &reference));
        let err_fine = max_abs(&(&fine - &reference));
        let ratio = err_coarse / err_fine;
        assert!(
            (11.0..22.0).contains(&ratio),
            "halving dt gave error ratio {ratio} (errors {err_coarse:.3e}/{err_fine:.3e})"
        );
    }

    #[test]
    fn harmonic_extraction_recovers_pure_tone() {
        // synthetic rho(t) = rho_a + rho_b e^{i delta t} sampled over one period
        let delta = 3.0;
        let period = 2.0 * std::f64::consts::PI / delta;
        let rho_a = Array2::from_elem((2, 2), C64::new(0.5, 0.0));
        let rho_b = Array2::from_elem((2, 2), C64::new(0.0, 0.25));
        let m = 64;
        let (times, states): (Vec<f64>, Vec<Array2<C64>>) = (0..m)
            .map(|k| {
                let t = k as f64 * period / m as f64;
                let phase = C64::new(0.0, delta * t).exp();
                (t, &rho_a + &rho_b.mapv(|z| phase * z))
            })
            .unzip();
        let got_a = harmonic_from_samples(&states, &times, delta, 0);
        let got_b = harmonic_from_samples(&states, &times, delta, 1);
        let got_missing = harmonic_from_samples(&states, &times, delta, -1);
        assert!(max_abs(&(&got_a - &rho_a)) < 1e-13);
        assert!(max_abs(&(&got_b - &rho_b)) < 1e-13);
        assert!(max_abs(&got_missing) < 1e-13);
    }
}
