//! Error type shared by all solver stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Parameter set violates a documented constraint.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Matrix or vector dimensions do not match the declared Hilbert space.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The central steady-state block is singular: no unique steady state.
    #[error("singular steady-state system: {0}")]
    SingularSteadyState(String),

    /// Harmonic truncation N_B is too small: doubling it moved the solution.
    #[error("harmonic truncation not converged: component change {change:.3e} exceeds tol {tol:.3e}")]
    HarmonicTruncation { change: f64, tol: f64 },

    /// Hierarchy residual after the continued-fraction solve exceeds tol.
    #[error("hierarchy residual {residual:.3e} exceeds tol {tol:.3e} (harmonic N = {harmonic})")]
    ResidualTooLarge {
        residual: f64,
        tol: f64,
        harmonic: i64,
    },

    /// Fixed-step integration lost trace conservation (step too large).
    #[error("trace drift {drift:.3e} exceeds {tol:.3e} at t = {t}: step size unstable")]
    TraceDrift { drift: f64, tol: f64, t: f64 },

    /// Eigen-expansion does not reconstruct the propagated correlation;
    /// callers should fall back to direct numeric quadrature.
    #[error("eigenbasis ill-conditioned: reconstruction residual {residual:.3e}")]
    IllConditionedEigenbasis { residual: f64 },

    /// Input state fails a Hermiticity/trace check.
    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    /// Monte Carlo histogram empty after the coupling cutoff.
    #[error("no samples above the cutoff f_cut = {f_cut}: density empty")]
    EmptyDensity { f_cut: f64 },

    /// An integrand failed at a specific quadrature node.
    #[error("integrand failed at g = {g}: {source}")]
    IntegrandFailure {
        g: f64,
        #[source]
        source: Box<CoreError>,
    },

    /// Spectra on different δ̃ grids cannot be subtracted.
    #[error("spectrum grids differ: {0}")]
    GridMismatch(String),

    /// Regression input with all-equal abscissa values.
    #[error("regression abscissa degenerate: all values equal {0}")]
    DegenerateAbscissa(f64),

    /// LAPACK failure (factorization, eigensolve, ...).
    #[error("linear algebra backend: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    /// File I/O failure during density import/export.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
