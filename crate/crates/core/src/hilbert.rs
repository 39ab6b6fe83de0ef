//! Truncated Jaynes-Cummings Hilbert space: operators, Hamiltonians, dressed
//! states.
//!
//! The joint space is Fock(n_max) ⊗ {g, e} with basis index 2·n_fock + atom
//! (atom 0 = ground, 1 = excited). The coupled couplet n, spanned by
//! |n−1, e⟩ and |n, g⟩, splits by 2√n·g around the uniform ladder energy
//! (ω − ω₁)(n − 1/2); the σ_z = ±1/2 convention makes that shift uniform.

use crate::error::{CoreError, Result};
use crate::params::SystemParams;
use crate::C64;
use ndarray::{Array1, Array2};

/// The six truncated operators on the joint space, dimension D = 2(n_max+1).
///
/// `a_dag` and `sigma_plus` are exact conjugate transposes of `a` and
/// `sigma_minus`; `number` = a†a. All matrices are immutable after
/// construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub dim: usize,
    pub n_max: usize,
    pub a: Array2<C64>,
    pub a_dag: Array2<C64>,
    pub sigma_plus: Array2<C64>,
    pub sigma_minus: Array2<C64>,
    pub sigma_z: Array2<C64>,
    pub number: Array2<C64>,
}

/// Unit-norm state on the joint space.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub amplitudes: Array1<C64>,
}

impl StateVector {
    /// Validates unit norm (within 1e-12).
    pub fn new(amplitudes: Array1<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidState(format!(
                "state norm {norm} differs from 1 beyond 1e-12"
            )));
        }
        Ok(StateVector { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Pure-state density matrix |ψ⟩⟨ψ|.
    pub fn density(&self) -> Array2<C64> {
        let d = self.dim();
        Array2::from_shape_fn((d, d), |(i, j)| {
            self.amplitudes[i] * self.amplitudes[j].conj()
        })
    }
}

/// Dressed-state branch within a couplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Reference frame of the Hamiltonian. Both return the same matrix shape;
/// `Lab` interprets the frequency scale as the bare ω (placeholder, since
/// only differences are observable), `Rotating` as ω − ω₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Lab,
    Rotating,
}

/// Build the operator set for photon-number cutoff `n_max` (non-negativity
/// is enforced by the unsigned type).
pub fn build_operator_set(n_max: usize) -> OperatorSet {
    let dim = 2 * (n_max + 1);
    let idx = |n_fock: usize, atom: usize| 2 * n_fock + atom;

    let mut a = Array2::<C64>::zeros((dim, dim));
    for n in 1..=n_max {
        for atom in 0..2 {
            a[(idx(n - 1, atom), idx(n, atom))] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    let a_dag = conj_transpose(&a);

    let mut sigma_minus = Array2::<C64>::zeros((dim, dim));
    for n in 0..=n_max {
        sigma_minus[(idx(n, 0), idx(n, 1))] = C64::new(1.0, 0.0);
    }
    let sigma_plus = conj_transpose(&sigma_minus);

    let mut sigma_z = Array2::<C64>::zeros((dim, dim));
    let mut number = Array2::<C64>::zeros((dim, dim));
    for n in 0..=n_max {
        sigma_z[(idx(n, 0), idx(n, 0))] = C64::new(-0.5, 0.0);
        sigma_z[(idx(n, 1), idx(n, 1))] = C64::new(0.5, 0.0);
        for atom in 0..2 {
            number[(idx(n, atom), idx(n, atom))] = C64::new(n as f64, 0.0);
        }
    }

    OperatorSet {
        dim,
        n_max,
        a,
        a_dag,
        sigma_plus,
        sigma_minus,
        sigma_z,
        number,
    }
}

pub fn conj_transpose(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Coupled-system Hamiltonian f·(σ_z + a†a) + i·g·(a†σ₋ − aσ₊) with
/// f = `detuning1` (the bare ω placeholder in the lab frame, ω − ω₁ in the
/// rotating frame). Hermitian by construction.
pub fn jc_hamiltonian(params: &SystemParams, frame: Frame) -> Array2<C64> {
    let ops = build_operator_set(params.n_max);
    jc_hamiltonian_with(&ops, params, frame)
}

/// Same as [`jc_hamiltonian`] but reusing an already-built operator set.
pub fn jc_hamiltonian_with(ops: &OperatorSet, params: &SystemParams, _frame: Frame) -> Array2<C64> {
    let f = C64::new(params.detuning1, 0.0);
    let ig = C64::new(0.0, params.g);
    let ladder = (&ops.sigma_z + &ops.number).mapv(|z| f * z);
    let coupling = (ops.a_dag.dot(&ops.sigma_minus) - ops.a.dot(&ops.sigma_plus)).mapv(|z| ig * z);
    ladder + coupling
}

/// Dressed state |n⟩_± = (i/√2)(|n−1⟩⊗|e⟩ ± i|n⟩⊗|g⟩), the eigenvector of
/// the coupled couplet n with energy f(n − 1/2) ± √n·g.
pub fn dressed_state(n: usize, branch: Branch, n_max: usize) -> Result<StateVector> {
    if n == 0 {
        return Err(CoreError::InvalidParams(
            "dressed states start at couplet n = 1".into(),
        ));
    }
    if n > n_max {
        return Err(CoreError::InvalidParams(format!(
            "couplet n = {n} exceeds cutoff n_max = {n_max}"
        )));
    }
    let dim = 2 * (n_max + 1);
    let mut amp = Array1::<C64>::zeros(dim);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    amp[2 * (n - 1) + 1] = C64::new(0.0, inv_sqrt2); // i/√2 on |n−1, e⟩
    amp[2 * n] = match branch {
        // i·(±i)/√2 on |n, g⟩
        Branch::Plus => C64::new(-inv_sqrt2, 0.0),
        Branch::Minus => C64::new(inv_sqrt2, 0.0),
    };
    Ok(StateVector { amplitudes: amp })
}

/// Closed-form couplet energy f(n − 1/2) ± √n·g.
pub fn couplet_energy(params: &SystemParams, n: usize, branch: Branch) -> f64 {
    let base = params.detuning1 * (n as f64 - 0.5);
    let split = (n as f64).sqrt() * params.g;
    match branch {
        Branch::Plus => base + split,
        Branch::Minus => base - split,
    }
}
