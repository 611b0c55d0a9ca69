//! Fixtures shared by the criterion benches.

use bdy_core::experiments::random_admissible;
use bdy_core::rng::replica_rng;
use bdy_core::{Cap, ModelParams, ProbMass};

/// The reference configuration `a = 5, μ = 7, b = 10`.
pub fn reference_params() -> ModelParams {
    ModelParams::finite(5, 7, 10).expect("valid parameters")
}

/// Floor-only parameters with a wide truncation.
pub fn wide_params(n_max: usize) -> ModelParams {
    ModelParams::new(2, 7, Cap::Infinite, Some(n_max)).expect("valid parameters")
}

/// A reproducible random state with mean `μ` supported below `top`.
pub fn random_state(params: &ModelParams, top: usize, seed: u64) -> ProbMass {
    random_admissible(&mut replica_rng(seed, 0), params.mu(), top, params.n_max())
        .expect("admissible state")
}
