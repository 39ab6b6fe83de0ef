//! System parameters, all rates in units of the cavity decay κ = 1.

use crate::error::{CoreError, Result};

/// Normalized detuning of the two-photon peak: the scanning field hits the
/// second-couplet transition |1⟩₋ → |2⟩₊ at δ̃ = 1 + √2.
pub const PEAK_DELTA_TILDE: f64 = 1.0 + std::f64::consts::SQRT_2;

/// Parameters of the driven, damped Jaynes-Cummings system.
///
/// `kappa` is the reference unit and must be exactly 1; it is kept as a field
/// so closed-form decay tests can switch it off explicitly. `detuning1` is
/// ω − ω₁; under the resonant subensemble-selection convention it equals the
/// coupling g_f of the addressed atoms. `delta` is ω₂ − ω₁, related to the
/// normalized scan detuning by δ = detuning1·(1 + δ̃).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Atom-cavity coupling g [κ].
    pub g: f64,
    /// Cavity field decay rate, the unit of all rates; must be 1.
    pub kappa: f64,
    /// Free-space atomic emission rate γ [κ].
    pub gamma: f64,
    /// ω − ω₁ [κ]; equals g_f when a subensemble is resonantly selected.
    pub detuning1: f64,
    /// ω₂ − ω₁ [κ].
    pub delta: f64,
    /// Fixed drive amplitude E₁ [κ].
    pub e1: f64,
    /// Scanning drive amplitude E₂ [κ].
    pub e2: f64,
    /// Photon-number cutoff; Hilbert dimension is 2(n_max + 1).
    pub n_max: usize,
}

impl Default for SystemParams {
    /// Desk-scale defaults: g = g_f = 9κ, γ = 2κ, E₁ = E₂ = 0.1κ, n_max = 4,
    /// scan parked on the two-photon peak δ = g_f(2 + √2).
    fn default() -> Self {
        let g_f = 9.0;
        SystemParams {
            g: g_f,
            kappa: 1.0,
            gamma: 2.0,
            detuning1: g_f,
            delta: g_f * (1.0 + PEAK_DELTA_TILDE),
            e1: 0.1,
            e2: 0.1,
            n_max: 4,
        }
    }
}

impl SystemParams {
    /// Validated constructor used at API boundaries. Tests that need
    /// unphysical rates (e.g. κ = 0 for a pure-γ decay law) build the struct
    /// literally instead.
    pub fn new(
        g: f64,
        gamma: f64,
        detuning1: f64,
        delta: f64,
        e1: f64,
        e2: f64,
        n_max: usize,
    ) -> Result<Self> {
        let p = SystemParams {
            g,
            kappa: 1.0,
            gamma,
            detuning1,
            delta,
            e1,
            e2,
            n_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa != 1.0 {
            return Err(CoreError::InvalidParams(format!(
                "kappa must be exactly 1 (rates are in units of kappa), got {}",
                self.kappa
            )));
        }
        for (name, v) in [
            ("g", self.g),
            ("gamma", self.gamma),
            ("e1", self.e1),
            ("e2", self.e2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CoreError::InvalidParams(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.detuning1.is_finite() || !self.delta.is_finite() {
            return Err(CoreError::InvalidParams(
                "detunings must be finite".into(),
            ));
        }
        // one photon pair needs at least two excitations in the ladder
        if self.n_max < 1 {
            return Err(CoreError::InvalidParams(format!(
                "n_max must be >= 1 for two-photon quantities, got {}",
                self.n_max
            )));
        }
        Ok(())
    }

    /// Hilbert dimension D = 2(n_max + 1).
    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    /// Normalized scan detuning δ̃ with δ = detuning1·(1 + δ̃).
    pub fn delta_tilde(&self) -> f64 {
        self.delta / self.detuning1 - 1.0
    }

    /// Same parameters with the scanning field at normalized detuning δ̃.
    pub fn at_delta_tilde(&self, delta_tilde: f64) -> Self {
        SystemParams {
            delta: self.detuning1 * (1.0 + delta_tilde),
            ..self.clone()
        }
    }
}
