use thiserror::Error;

use crate::silp::RefinedSolution;
use crate::synthesis::Rollout;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem definition: {0}")]
    InvalidProblem(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("state {0:?} lies outside the state region")]
    StateOutsideRegion(Vec<f64>),

    #[error("no admissible control at state {state:?}")]
    AssumptionIViolation { state: Vec<f64> },

    #[error("atoms at state {state:?} carry different controls {first:?} and {second:?}")]
    AssumptionIIViolation {
        state: Vec<f64>,
        first: Vec<f64>,
        second: Vec<f64>,
    },

    #[error("transition from {state:?} under {control:?} leaves the state region (lands at {next:?})")]
    InadmissibleTransition {
        state: Vec<f64>,
        control: Vec<f64>,
        next: Vec<f64>,
    },

    #[error("grid yields {columns} admissible points but the LP has {rows} rows")]
    InsufficientGrid { columns: usize, rows: usize },

    #[error("LP is infeasible (phase one residual {0:.3e})")]
    LpInfeasible(f64),

    #[error("LP is unbounded")]
    LpUnbounded,

    #[error("simplex stalled after {0} pivots")]
    SolverStalled(usize),

    #[error("refinement did not converge in {rounds} rounds (min reduced cost {min_reduced_cost:.3e})")]
    NonConverged {
        rounds: usize,
        min_reduced_cost: f64,
        best: Box<RefinedSolution>,
    },

    #[error("every atom fell below the discard threshold")]
    EmptyMeasure,

    #[error("rollout aborted at t={t}: {source}")]
    RolloutAborted {
        t: usize,
        partial: Box<Rollout>,
        #[source]
        source: Box<Error>,
    },

    #[error("value iteration did not converge in {iterations} sweeps (last difference {last_diff:.3e})")]
    NotConverged {
        iterations: usize,
        last_diff: f64,
        last: Box<crate::verify::ValueFunctionGrid>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
