//! Numerics for the three-classes BDY dollar-exchange model.
//!
//! Agents hold integer wealth. At exponential times an agent with wealth
//! above the floor `a` hands one dollar to an agent whose wealth is below
//! the cap `b`. The crate covers:
//!
//! - [`agent_sim`]: exact continuous-time simulation of the N-agent system,
//! - [`meanfield`]: the N → ∞ ODE system for the wealth distribution and
//!   its RK4 integration,
//! - [`equilibrium`]: the truncated geometric equilibrium and its common ratio,
//! - [`diagnostics`]: entropy functionals, Gini index and distances,
//! - [`experiments`]: convergence, propagation-of-chaos, Gini sweep and
//!   generator studies,
//! - [`io`]: CSV emission and parsing shared by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent_sim;
pub mod diagnostics;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mass;
pub mod meanfield;
pub mod params;
pub mod rng;

pub use error::{Error, Result};
pub use mass::{make_prob_mass, ProbMass};
pub use params::{validate_params, Cap, ModelParams, RawParams};

/// Tolerance on total probability mass.
pub const MASS_TOL: f64 = 1e-9;
/// Tolerance on the first moment of a distribution.
pub const MEAN_TOL: f64 = 1e-6;
/// Bracket width at which root bisection stops.
pub const ROOT_TOL: f64 = 1e-12;
