//! Shared fixtures for the solver benchmarks: every bench measures one
//! stage of the coincidence-spectrum pipeline on the default operating
//! point (g = detuning1 = 9κ, γ = 2κ, E₁ = E₂ = 0.1κ, n_max = 4), so the
//! numbers are directly comparable across stages.

use tpcs_core::hilbert::{build_operator_set, OperatorSet};
use tpcs_core::liouville::{
    build_sideband_superops_with, build_static_liouvillian_with, Superoperator,
};
use tpcs_core::params::SystemParams;

/// Static pieces every solver stage starts from: parameters, the operator
/// set on the truncated ladder, the static Liouvillian, and the two
/// scanning-sideband superoperators.
pub struct Fixture {
    pub params: SystemParams,
    pub ops: OperatorSet,
    pub l_static: Superoperator,
    pub s_up: Superoperator,
    pub s_down: Superoperator,
}

/// Build the default-point fixture once per benchmark group.
pub fn default_fixture() -> Fixture {
    let params = SystemParams::default();
    let ops = build_operator_set(params.n_max);
    let l_static = build_static_liouvillian_with(&ops, &params);
    let (s_up, s_down) = build_sideband_superops_with(&ops, &params);
    Fixture {
        params,
        ops,
        l_static,
        s_up,
        s_down,
    }
}
