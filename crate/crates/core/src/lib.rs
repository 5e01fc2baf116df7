//! Occupational-measure linear programming for infinite-horizon discounted
//! optimal control in discrete time.
//!
//! The pipeline is:
//!
//! 1. [`model`]: a [`DiscreteControlProblem`] (dynamics, cost, box regions,
//!    discount, initial state), either built in or from the registry.
//! 2. [`basis`]: monomial test functions and the constraint coefficients of
//!    the finitely-constrained measure LP.
//! 3. [`silp`]: assembly of the LP on a discretized graph of admissible
//!    state/control pairs, a dense revised simplex, cutting-plane refinement
//!    and extraction of the atomic measure and the dual certificate.
//! 4. [`synthesis`]: feedback controls built from the certificate or from the
//!    atoms, rollouts, and the suboptimality gap.
//! 5. [`verify`]: independent oracles (value iteration) and residual checks.

pub mod basis;
pub mod config;
mod error;
pub mod export;
pub mod model;
pub mod silp;
pub mod synthesis;
pub mod verify;

pub use basis::MonomialBasis;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{builtin_problem, DiscreteControlProblem, ProblemOverrides, StateActionPoint};
pub use silp::{AtomicMeasure, DualCertificate, FiniteLP, LpSolution};
pub use synthesis::{FeedbackPolicy, Rollout};
pub use verify::ValueFunctionGrid;
