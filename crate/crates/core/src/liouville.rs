//! Vectorized master-equation generators.
//!
//! In the frame rotating at the fixed drive frequency ω₁ the density matrix
//! obeys ρ̇ = L_static ρ + e^{−iδt} S_up ρ + e^{+iδt} S_down ρ with
//!
//!   L_static ρ = −i(H_eff ρ − ρ H_eff†) + γ σ₋ρσ₊ + 2κ aρa†,
//!   H_eff = (ω−ω₁)(σ_z + a†a) + ig(a†σ₋ − aσ₊) + iE₁(σ₊ − σ₋)
//!           − iκ a†a − i(γ/2) σ₊σ₋,
//!   S_up ρ = E₂ [σ₊, ρ],    S_down ρ = −E₂ [σ₋, ρ].
//!
//! Density matrices are vectorized by column stacking, so an operator
//! sandwich AρB becomes the matrix (Bᵀ ⊗ A) — the transpose is plain, not
//! conjugated. All superoperators are dense: D ≤ 12 at desk scale makes
//! sparsity machinery pointless.

use crate::error::{CoreError, Result};
use crate::hilbert::{build_operator_set, conj_transpose, OperatorSet};
use crate::params::SystemParams;
use crate::C64;
use ndarray::linalg::kron;
use ndarray::{Array1, Array2};

/// Dense complex matrix acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    /// Side length D of the density matrices acted upon.
    pub dim_rho: usize,
    /// D² × D² generator matrix.
    pub matrix: Array2<C64>,
}

impl Superoperator {
    pub fn dim(&self) -> usize {
        self.dim_rho * self.dim_rho
    }

    /// Apply to a density matrix (vectorize, multiply, devectorize).
    pub fn apply(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        let v = vectorize(rho);
        if v.len() != self.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(devectorize(&self.matrix.dot(&v), self.dim_rho))
    }
}

/// Column-stack a square matrix: vec[c·D + r] = m[r, c].
pub fn vectorize(m: &Array2<C64>) -> Array1<C64> {
    // iterating the transpose view walks the original column by column
    Array1::from_iter(m.t().iter().cloned())
}

/// Inverse of [`vectorize`] for a D×D matrix.
pub fn devectorize(v: &Array1<C64>, d: usize) -> Array2<C64> {
    assert_eq!(v.len(), d * d, "vector length does not match dimension");
    let mut m = Array2::<C64>::zeros((d, d));
    for c in 0..d {
        for r in 0..d {
            m[(r, c)] = v[c * d + r];
        }
    }
    m
}

/// Row functional whose inner product with vec(ρ) is trace(ρ).
pub fn trace_row(d: usize) -> Array1<C64> {
    let mut row = Array1::<C64>::zeros(d * d);
    for k in 0..d {
        row[k * d + k] = C64::new(1.0, 0.0);
    }
    row
}

/// Superoperator matrix of ρ ↦ AρB under column stacking: Bᵀ ⊗ A.
pub fn sandwich(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    kron(&b.t(), &a.view())
}

/// Superoperator matrix of ρ ↦ [X, ρ].
fn commutator_superop(x: &Array2<C64>) -> Array2<C64> {
    let d = x.nrows();
    let eye = Array2::<C64>::eye(d);
    sandwich(x, &eye) - sandwich(&eye, x)
}

/// The non-Hermitian effective Hamiltonian (drive E₁ and loss terms
/// included, scanning drive E₂ excluded).
pub fn effective_hamiltonian(ops: &OperatorSet, params: &SystemParams) -> Array2<C64> {
    let f = C64::new(params.detuning1, 0.0);
    let ig = C64::new(0.0, params.g);
    let ie1 = C64::new(0.0, params.e1);
    let m_ik = C64::new(0.0, -params.kappa);
    let m_ig2 = C64::new(0.0, -0.5 * params.gamma);

    (&ops.sigma_z + &ops.number).mapv(|z| f * z)
        + (ops.a_dag.dot(&ops.sigma_minus) - ops.a.dot(&ops.sigma_plus)).mapv(|z| ig * z)
        + (&ops.sigma_plus - &ops.sigma_minus).mapv(|z| ie1 * z)
        + ops.number.mapv(|z| m_ik * z)
        + ops.sigma_plus.dot(&ops.sigma_minus).mapv(|z| m_ig2 * z)
}

/// Static part of the generator: coherent non-Hermitian evolution plus the
/// jump term γσ₋ρσ₊ + 2κaρa†. Annihilated by the trace functional.
pub fn build_static_liouvillian(params: &SystemParams) -> Superoperator {
    let ops = build_operator_set(params.n_max);
    build_static_liouvillian_with(&ops, params)
}

/// Same as [`build_static_liouvillian`] reusing an operator set.
pub fn build_static_liouvillian_with(ops: &OperatorSet, params: &SystemParams) -> Superoperator {
    let d = ops.dim;
    let eye = Array2::<C64>::eye(d);
    let h_eff = effective_hamiltonian(ops, params);
    let h_eff_dag = conj_transpose(&h_eff);

    let m_i = C64::new(0.0, -1.0);
    let coherent = (sandwich(&h_eff, &eye) - sandwich(&eye, &h_eff_dag)).mapv(|z| m_i * z);
    let jump = sandwich(&ops.sigma_minus, &ops.sigma_plus).mapv(|z| params.gamma * z)
        + sandwich(&ops.a, &ops.a_dag).mapv(|z| 2.0 * params.kappa * z);

    Superoperator {
        dim_rho: d,
        matrix: coherent + jump,
    }
}

/// Sideband superoperators: S_up carries e^{−iδt}, S_down carries e^{+iδt}.
pub fn build_sideband_superops(params: &SystemParams) -> (Superoperator, Superoperator) {
    let ops = build_operator_set(params.n_max);
    build_sideband_superops_with(&ops, params)
}

/// Same as [`build_sideband_superops`] reusing an operator set.
pub fn build_sideband_superops_with(
    ops: &OperatorSet,
    params: &SystemParams,
) -> (Superoperator, Superoperator) {
    let e2 = params.e2;
    let up = commutator_superop(&ops.sigma_plus).mapv(|z| e2 * z);
    let down = commutator_superop(&ops.sigma_minus).mapv(|z| -e2 * z);
    (
        Superoperator {
            dim_rho: ops.dim,
            matrix: up,
        },
        Superoperator {
            dim_rho: ops.dim,
            matrix: down,
        },
    )
}

/// Full generator matrix at time t:
/// L_static + e^{−iδt} S_up + e^{+iδt} S_down.
pub fn full_generator_at(
    l_static: &Superoperator,
    s_up: &Superoperator,
    s_down: &Superoperator,
    delta: f64,
    t: f64,
) -> Array2<C64> {
    let up_phase = C64::new(0.0, -delta * t).exp();
    let down_phase = C64::new(0.0, delta * t).exp();
    &l_static.matrix
        + &(s_up.matrix.mapv(|z| up_phase * z) + s_down.matrix.mapv(|z| down_phase * z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{expm, max_abs};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex_matrix(d: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
        Array2::from_shape_fn((d, d), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
        let m = random_complex_matrix(d, rng);
        (&m + &conj_transpose(&m)).mapv(|z| 0.5 * z)
    }

    #[test]
    fn trace_functional_on_identity() {
        let eye = Array2::<C64>::eye(4);
        let tr: C64 = trace_row(4)
            .iter()
            .zip(vectorize(&eye).iter())
            .map(|(a, b)| a * b)
            .sum();
        assert_eq!(tr, C64::new(4.0, 0.0));
    }

    #[test]
    fn vectorize_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_complex_matrix(6, &mut rng);
        let back = devectorize(&vectorize(&m), 6);
        assert_eq!(m, back);
    }

    #[test]
    fn column_stacking_order() {
        let m = array![
            [C64::new(1.0, 0.0), C64::new(2.0, 0.0)],
            [C64::new(3.0, 0.0), C64::new(4.0, 0.0)]
        ];
        let v = vectorize(&m);
        // columns first: (1, 3, 2, 4)
        assert_eq!(v[0], C64::new(1.0, 0.0));
        assert_eq!(v[1], C64::new(3.0, 0.0));
        assert_eq!(v[2], C64::new(2.0, 0.0));
        assert_eq!(v[3], C64::new(4.0, 0.0));
    }

    #[test]
    fn sandwich_rule_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_complex_matrix(2, &mut rng);
        let b = random_complex_matrix(2, &mut rng);
        let rho = random_complex_matrix(2, &mut rng);
        let direct = vectorize(&a.dot(&rho).dot(&b));
        let via_super = sandwich(&a, &b).dot(&vectorize(&rho));
        let diff: f64 = direct
            .iter()
            .zip(via_super.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn static_generator_annihilates_trace() {
        let l = build_static_liouvillian(&SystemParams::default());
        let row = trace_row(l.dim_rho);
        let image = row.dot(&l.matrix);
        let worst = image.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-12, "trace row image {worst}");
    }

    #[test]
    fn empty_cavity_decay_follows_closed_form() {
        // g = 0, E₁ = 0, γ = 0: photon number decays as 2e^{−2κt}
        let p = SystemParams {
            g: 0.0,
            e1: 0.0,
            e2: 0.0,
            gamma: 0.0,
            ..Default::default()
        };
        let ops = build_operator_set(p.n_max);
        let l = build_static_liouvillian_with(&ops, &p);
        // start in |2⟩⊗|g⟩
        let mut rho0 = Array2::<C64>::zeros((ops.dim, ops.dim));
        rho0[(4, 4)] = C64::new(1.0, 0.0);
        for t in [0.1, 0.5, 1.0] {
            let prop = expm(&l.matrix.mapv(|z| z * t));
            let rho_t = devectorize(&prop.dot(&vectorize(&rho0)), ops.dim);
            let n_mean: C64 = ops
                .number
                .dot(&rho_t)
                .diag()
                .iter()
                .sum();
            let want = 2.0 * (-2.0 * t).exp();
            assert!(
                (n_mean.re - want).abs() < 1e-9 && n_mean.im.abs() < 1e-12,
                "t={t}: ⟨n⟩ = {n_mean} vs {want}"
            );
        }
    }

    #[test]
    fn atomic_decay_follows_closed_form() {
        // κ switched off by hand: excited population decays as e^{−γt}
        let p = SystemParams {
            g: 0.0,
            e1: 0.0,
            e2: 0.0,
            gamma: 2.0,
            kappa: 0.0,
            ..Default::default()
        };
        let ops = build_operator_set(p.n_max);
        let l = build_static_liouvillian_with(&ops, &p);
        let mut rho0 = Array2::<C64>::zeros((ops.dim, ops.dim));
        rho0[(1, 1)] = C64::new(1.0, 0.0); // |0, e⟩
        let pe_op = ops.sigma_plus.dot(&ops.sigma_minus);
        for t in [0.2, 0.7] {
            let prop = expm(&l.matrix.mapv(|z| z * t));
            let rho_t = devectorize(&prop.dot(&vectorize(&rho0)), ops.dim);
            let pe: C64 = pe_op.dot(&rho_t).diag().iter().sum();
            let want = (-2.0 * t).exp();
            assert!((pe.re - want).abs() < 1e-10, "t={t}: P_e = {pe} vs {want}");
        }
    }

    #[test]
    fn zero_scan_drive_kills_sidebands() {
        let p = SystemParams {
            e2: 0.0,
            ..Default::default()
        };
        let (up, down) = build_sideband_superops(&p);
        assert_eq!(max_abs(&up.matrix), 0.0);
        assert_eq!(max_abs(&down.matrix), 0.0);
    }

    #[test]
    fn sideband_action_on_ground_state() {
        // S_up |0,g⟩⟨0,g| = E₂ |0,e⟩⟨0,g|
        let p = SystemParams::default();
        let ops = build_operator_set(p.n_max);
        let (up, _) = build_sideband_superops_with(&ops, &p);
        let mut rho = Array2::<C64>::zeros((ops.dim, ops.dim));
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let image = up.apply(&rho).unwrap();
        let mut want = Array2::<C64>::zeros((ops.dim, ops.dim));
        want[(1, 0)] = C64::new(p.e2, 0.0);
        let diff = &image - &want;
        assert!(max_abs(&diff) < 1e-14);
    }

    #[test]
    fn sidebands_reassemble_into_shifted_drive_at_t_zero() {
        // at t = 0 the scanning drive adds to the fixed one: static(E₁) +
        // S_up + S_down = static generator built with drive E₁ + E₂
        let p = SystemParams::default();
        let ops = build_operator_set(p.n_max);
        let l = build_static_liouvillian_with(&ops, &p);
        let (up, down) = build_sideband_superops_with(&ops, &p);
        let combined = full_generator_at(&l, &up, &down, p.delta, 0.0);
        let merged_params = SystemParams {
            e1: p.e1 + p.e2,
            ..p.clone()
        };
        let direct = build_static_liouvillian_with(&ops, &merged_params);
        let diff = &combined - &direct.matrix;
        assert!(max_abs(&diff) < 1e-13);
    }

    #[test]
    fn full_generator_annihilates_trace_at_random_times() {
        let p = SystemParams::default();
        let ops = build_operator_set(p.n_max);
        let l = build_static_liouvillian_with(&ops, &p);
        let (up, down) = build_sideband_superops_with(&ops, &p);
        let row = trace_row(ops.dim);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let t: f64 = rng.gen_range(0.0..50.0);
            let gen = full_generator_at(&l, &up, &down, p.delta, t);
            let image = row.dot(&gen);
            let worst = image.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(worst <= 1e-12, "t={t}: {worst}");
        }
    }

    #[test]
    fn full_generator_preserves_hermiticity() {
        let p = SystemParams::default();
        let ops = build_operator_set(p.n_max);
        let l = build_static_liouvillian_with(&ops, &p);
        let (up, down) = build_sideband_superops_with(&ops, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let t: f64 = rng.gen_range(0.0..50.0);
            let rho = random_hermitian(ops.dim, &mut rng);
            let gen = full_generator_at(&l, &up, &down, p.delta, t);
            let image = devectorize(&gen.dot(&vectorize(&rho)), ops.dim);
            let defect = &image - &conj_transpose(&image);
            assert!(max_abs(&defect) <= 1e-12, "t={t}");
        }
    }

    #[test]
    #[allow(clippy::type_complexity)]
    fn generator_entries_affine_in_each_rate() {
        // L(2x) − L(x) = L(x) − L(0) entrywise for every rate parameter
        let base = SystemParams::default();
        let build = |p: &SystemParams| build_static_liouvillian(p).matrix;
        let cases: Vec<(&str, Box<dyn Fn(f64) -> SystemParams>)> = vec![
            ("e1", Box::new(|x| SystemParams { e1: x, ..SystemParams::default() })),
            ("gamma", Box::new(|x| SystemParams { gamma: x, ..SystemParams::default() })),
            ("kappa", Box::new(|x| SystemParams { kappa: x, ..SystemParams::default() })),
        ];
        for (name, make) in &cases {
            let l0 = build(&make(0.0));
            let l1 = build(&make(0.8));
            let l2 = build(&make(1.6));
            let lhs = &l2 - &l1;
            let rhs = &l1 - &l0;
            let diff = &lhs - &rhs;
            assert!(max_abs(&diff) < 1e-12, "nonlinear in {name}");
        }
        // e2 enters through the sidebands
        let side = |x: f64| {
            let p = SystemParams { e2: x, ..base.clone() };
            let (up, down) = build_sideband_superops(&p);
            (up.matrix, down.matrix)
        };
        let (u0, d0) = side(0.0);
        let (u1, d1) = side(0.5);
        let (u2, d2) = side(1.0);
        let du = &(&u2 - &u1) - &(&u1 - &u0);
        let dd = &(&d2 - &d1) - &(&d1 - &d0);
        assert!(max_abs(&du) < 1e-12 && max_abs(&dd) < 1e-12, "nonlinear in e2");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_vectorize_round_trip(seed in any::<u64>(), d in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_complex_matrix(d, &mut rng);
            prop_assert_eq!(devectorize(&vectorize(&m), d), m);
        }

        #[test]
        fn prop_sandwich_rule(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_complex_matrix(3, &mut rng);
            let b = random_complex_matrix(3, &mut rng);
            let rho = random_complex_matrix(3, &mut rng);
            let direct = vectorize(&a.dot(&rho).dot(&b));
            let via = sandwich(&a, &b).dot(&vectorize(&rho));
            let diff: f64 = direct.iter().zip(via.iter())
                .map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-12);
        }
    }
}
