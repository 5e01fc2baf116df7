//! The finitely-constrained measure LP on a discretized graph `G`.
//!
//! Decision variables are weights on grid points `(y, u)`. For every
//! non-constant basis function `φᵢ` the weighted constraint coefficients must
//! sum to zero, and the weights sum to one. The optimal basic solution is an
//! atomic measure with at most `N + 1` atoms; the simplex multipliers give the
//! coefficients `λ` of `ψ = Σ λᵢφᵢ` and the max-min value `μ`.

pub mod simplex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{dot, CoefficientContext, MonomialBasis};
use crate::model::{lex_cmp, DiscreteControlProblem, StateActionPoint};
use crate::{Error, Result};

pub use simplex::SimplexOptions;

/// Uniform grid resolution (nodes per axis) for states and controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub state_points: usize,
    pub control_points: usize,
}

impl GridSpec {
    pub fn new(state_points: usize, control_points: usize) -> Self {
        Self { state_points, control_points }
    }
}

/// Candidate set scanned by [`refine`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    pub grid: GridSpec,
    /// Most-violating candidates appended per round.
    pub batch: usize,
    /// Half-width of the local stencil placed around each atom's state;
    /// `None` disables local sampling.
    pub local_radius: Option<f64>,
}

impl CandidateSpec {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, batch: 8, local_radius: None }
    }
}

/// Measure LP on a finite set of admissible points. Row `i < N−1` is the
/// constraint of basis function `i + 1`; the last row is the normalization.
#[derive(Debug, Clone)]
pub struct FiniteLP {
    grid: Vec<StateActionPoint>,
    cost: Vec<f64>,
    /// Column-major, `rows` entries per grid point.
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    rows: usize,
    warm_basis: Option<Vec<usize>>,
}

impl FiniteLP {
    pub fn grid(&self) -> &[StateActionPoint] {
        &self.grid
    }

    pub fn cost_vector(&self) -> &[f64] {
        &self.cost
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.grid.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Column `k` of the constraint matrix (basis rows, then the all-ones row).
    pub fn column(&self, k: usize) -> &[f64] {
        &self.matrix[k * self.rows..(k + 1) * self.rows]
    }

    /// Build from explicit points; inadmissible points are dropped.
    pub fn from_points(
        problem: &DiscreteControlProblem,
        basis: &MonomialBasis,
        points: Vec<StateActionPoint>,
    ) -> Self {
        let rows = basis.len();
        let mut lp = FiniteLP {
            grid: Vec::new(),
            cost: Vec::new(),
            matrix: Vec::new(),
            rhs: (0..rows).map(|i| if i + 1 == rows { 1.0 } else { 0.0 }).collect(),
            rows,
            warm_basis: None,
        };
        lp.append(problem, basis, points);
        lp
    }

    /// Appends admissible points. The previous optimal basis stays valid as a
    /// warm start because adding columns preserves primal feasibility.
    pub fn append(&mut self, problem: &DiscreteControlProblem, basis: &MonomialBasis, points: Vec<StateActionPoint>) {
        let rows = self.rows;
        let admissible: Vec<StateActionPoint> = points
            .into_iter()
            .filter(|p| problem.is_admissible(&p.state, &p.control))
            .collect();
        let columns: Vec<(f64, Vec<f64>)> = admissible
            .par_iter()
            .map_init(
                || (CoefficientContext::new(basis, problem), vec![0.0; rows]),
                |(ctx, buf), p| {
                    ctx.column_into(problem, &p.state, &p.control, buf);
                    let mut col = Vec::with_capacity(rows);
                    col.extend_from_slice(&buf[1..]);
                    col.push(1.0);
                    (problem.cost(&p.state, &p.control), col)
                },
            )
            .collect();
        self.matrix.reserve(columns.len() * rows);
        for (c, col) in columns {
            self.cost.push(c);
            self.matrix.extend_from_slice(&col);
        }
        self.grid.extend(admissible);
    }

    /// Optimal basis of the last solve, used as a warm start by [`solve`].
    pub fn set_warm_basis(&mut self, basis: Option<Vec<usize>>) {
        self.warm_basis = basis;
    }
}

/// Columns for every admissible point of a uniform state × control grid, in
/// lexicographic (state, control) order. The initial state is always added to
/// the grid states since every occupational measure puts mass `1−α` on it.
pub fn assemble(problem: &DiscreteControlProblem, basis: &MonomialBasis, spec: &GridSpec) -> Result<FiniteLP> {
    if basis.dim() != problem.state_dim() {
        return Err(Error::Precondition(format!(
            "basis dimension {} does not match state dimension {}",
            basis.dim(),
            problem.state_dim()
        )));
    }
    let controls = problem.control_grid(spec.control_points);
    let mut states = problem.state_grid(spec.state_points);
    if !states.iter().any(|y| y.as_slice() == problem.initial_state()) {
        states.push(problem.initial_state().to_vec());
        states.sort_by(|a, b| lex_cmp(a, b));
    }
    let points: Vec<StateActionPoint> = states
        .into_iter()
        .flat_map(|y| controls.iter().map(move |u| StateActionPoint::new(y.clone(), u.clone())))
        .collect();
    let lp = FiniteLP::from_points(problem, basis, points);
    if lp.columns() < lp.rows() {
        return Err(Error::InsufficientGrid { columns: lp.columns(), rows: lp.rows() });
    }
    Ok(lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: StateActionPoint,
    pub weight: f64,
}

/// Convex combination of Dirac measures on `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `∫ g dγ`
    pub fn integrate_cost(&self, problem: &DiscreteControlProblem) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * problem.cost(&a.point.state, &a.point.control))
            .sum()
    }
}

/// `ψ = Σ λᵢφᵢ` (with `λ₁ = 0`) and the optimal value `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    pub mu: f64,
}

impl DualCertificate {
    pub fn psi(&self, basis: &MonomialBasis, y: &[f64]) -> f64 {
        basis.combine(&self.lambda, y)
    }

    /// `g + α(ψ∘f − ψ) + (1−α)(ψ(y₀) − ψ) − μ` at one point.
    pub fn reduced_cost(&self, problem: &DiscreteControlProblem, basis: &MonomialBasis, p: &StateActionPoint) -> f64 {
        problem.cost(&p.state, &p.control) + dot(&self.lambda, &basis.constraint_column(problem, p)) - self.mu
    }
}

/// Result of one LP solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub measure: AtomicMeasure,
    pub certificate: DualCertificate,
    /// Primal objective `Σ βⱼ g(yⱼ, uⱼ)`.
    pub value: f64,
    pub pivots: usize,
    #[serde(skip)]
    basis: Vec<usize>,
}

pub fn solve(lp: &FiniteLP) -> Result<LpSolution> {
    solve_with(lp, SimplexOptions::default())
}

pub fn solve_with(lp: &FiniteLP, opts: SimplexOptions) -> Result<LpSolution> {
    let dense = simplex::DenseProblem {
        rows: lp.rows,
        cols: lp.columns(),
        matrix: &lp.matrix,
        rhs: &lp.rhs,
        cost: &lp.cost,
    };
    let out = simplex::solve(dense, lp.warm_basis.as_deref(), opts).map_err(|f| match f {
        simplex::SimplexFailure::Infeasible(r) => Error::LpInfeasible(r),
        simplex::SimplexFailure::Unbounded => Error::LpUnbounded,
        simplex::SimplexFailure::Stalled(n) => Error::SolverStalled(n),
    })?;

    let mut atoms: Vec<(usize, f64)> = out
        .basis
        .iter()
        .zip(&out.values)
        .filter(|(&v, &x)| v < lp.columns() && x > 0.0)
        .map(|(&v, &x)| (v, x))
        .collect();
    atoms.sort_by_key(|&(v, _)| v);
    let measure = AtomicMeasure {
        atoms: atoms
            .iter()
            .map(|&(v, x)| Atom { point: lp.grid[v].clone(), weight: x })
            .collect(),
    };
    let rows = lp.rows;
    let mut lambda = Vec::with_capacity(rows);
    lambda.push(0.0);
    lambda.extend(out.duals[..rows - 1].iter().map(|p| -p));
    let certificate = DualCertificate { lambda, mu: out.duals[rows - 1] };
    let value = atoms.iter().map(|&(v, x)| x * lp.cost[v]).sum();
    Ok(LpSolution { measure, certificate, value, pivots: out.pivots, basis: out.basis })
}

/// Outcome of one refinement pass.
#[derive(Debug, Clone)]
pub enum Refinement {
    Augmented { lp: FiniteLP, added: usize, min_reduced_cost: f64 },
    Converged { lp: FiniteLP, min_reduced_cost: f64 },
}

impl Refinement {
    pub fn is_converged(&self) -> bool {
        matches!(self, Refinement::Converged { .. })
    }

    pub fn min_reduced_cost(&self) -> f64 {
        match self {
            Refinement::Augmented { min_reduced_cost, .. } | Refinement::Converged { min_reduced_cost, .. } => {
                *min_reduced_cost
            }
        }
    }

    pub fn into_lp(self) -> FiniteLP {
        match self {
            Refinement::Augmented { lp, .. } | Refinement::Converged { lp, .. } => lp,
        }
    }
}

/// Candidate points: the uniform candidate grid plus, optionally, a
/// `3^m − 1` point stencil of half-width `local_radius` around every atom
/// state (paired with every candidate control). Inadmissible and duplicate
/// points are dropped; order is lexicographic on `(y, u)`.
pub fn candidate_points(
    problem: &DiscreteControlProblem,
    spec: &CandidateSpec,
    measure: Option<&AtomicMeasure>,
) -> Vec<StateActionPoint> {
    let controls = problem.control_grid(spec.grid.control_points);
    let mut states = problem.state_grid(spec.grid.state_points);
    if let (Some(r), Some(m)) = (spec.local_radius, measure) {
        let dim = problem.state_dim();
        let offsets: Vec<Vec<f64>> = crate::model::tensor_grid(&vec![-r; dim], &vec![r; dim], &vec![3; dim])
            .into_iter()
            .filter(|o| o.iter().any(|&v| v != 0.0))
            .collect();
        for atom in &m.atoms {
            for off in &offsets {
                let y: Vec<f64> = atom.point.state.iter().zip(off).map(|(a, b)| a + b).collect();
                if problem.state_region().contains(&y) {
                    states.push(y);
                }
            }
        }
        states.sort_by(|a, b| lex_cmp(a, b));
        states.dedup();
    }
    states
        .iter()
        .flat_map(|y| controls.iter().map(move |u| (y, u)))
        .filter(|(y, u)| problem.is_admissible(y, u))
        .map(|(y, u)| StateActionPoint::new(y.clone(), u.clone()))
        .collect()
}

/// Reduced costs of `points` under `certificate`, in input order.
pub fn reduced_costs(
    problem: &DiscreteControlProblem,
    basis: &MonomialBasis,
    certificate: &DualCertificate,
    points: &[StateActionPoint],
) -> Vec<f64> {
    let n = basis.len();
    points
        .par_iter()
        .map_init(
            || (CoefficientContext::new(basis, problem), vec![0.0; n]),
            |(ctx, col), p| {
                ctx.column_into(problem, &p.state, &p.control, col);
                problem.cost(&p.state, &p.control) + dot(&certificate.lambda, col) - certificate.mu
            },
        )
        .collect()
}

/// One cutting-plane pass: if some candidate has reduced cost below `-tol`,
/// append up to `spec.batch` of the most violating ones (ties in
/// lexicographic `(y, u)` order).
pub fn refine(
    problem: &DiscreteControlProblem,
    basis: &MonomialBasis,
    mut lp: FiniteLP,
    solution: &LpSolution,
    spec: &CandidateSpec,
    tol: f64,
) -> Refinement {
    let candidates = candidate_points(problem, spec, Some(&solution.measure));
    let costs = reduced_costs(problem, basis, &solution.certificate, &candidates);
    let min_reduced_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut violating: Vec<usize> = (0..candidates.len()).filter(|&k| costs[k] < -tol).collect();
    if violating.is_empty() {
        lp.set_warm_basis(Some(solution.basis.clone()));
        return Refinement::Converged { lp, min_reduced_cost };
    }
    // candidates are already in lexicographic order, so a stable sort keeps it for ties
    violating.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    violating.truncate(spec.batch.max(1));
    let added = violating.len();
    let new_points: Vec<StateActionPoint> = violating.into_iter().map(|k| candidates[k].clone()).collect();
    lp.append(problem, basis, new_points);
    lp.set_warm_basis(Some(solution.basis.clone()));
    Refinement::Augmented { lp, added, min_reduced_cost }
}

/// Converged (or best-so-far) output of [`solve_refined`].
#[derive(Debug, Clone)]
pub struct RefinedSolution {
    pub solution: LpSolution,
    pub lp: FiniteLP,
    pub rounds: usize,
    /// Primal value after each solve.
    pub history: Vec<f64>,
    /// `max(0, −min reduced cost)` over the final candidate scan.
    pub max_dual_violation: f64,
}

/// Alternates [`solve`] and [`refine`] until the candidate set certifies the
/// dual solution or `max_rounds` solves have been made.
pub fn solve_refined(
    problem: &DiscreteControlProblem,
    basis: &MonomialBasis,
    grid: &GridSpec,
    candidates: &CandidateSpec,
    tol: f64,
    max_rounds: usize,
) -> Result<RefinedSolution> {
    if max_rounds == 0 {
        return Err(Error::Precondition("max_rounds must be at least 1".into()));
    }
    let mut lp = assemble(problem, basis, grid)?;
    let mut history = Vec::new();
    for round in 1..=max_rounds {
        let solution = solve(&lp)?;
        history.push(solution.value);
        log::debug!(
            "round {round}: {} columns, value {:.9}, {} pivots",
            lp.columns(),
            solution.value,
            solution.pivots
        );
        if !tol.is_finite() {
            return Ok(RefinedSolution { solution, lp, rounds: round, history, max_dual_violation: 0.0 });
        }
        match refine(problem, basis, lp, &solution, candidates, tol) {
            Refinement::Converged { lp, min_reduced_cost } => {
                return Ok(RefinedSolution {
                    solution,
                    lp,
                    rounds: round,
                    history,
                    max_dual_violation: (-min_reduced_cost).max(0.0),
                });
            }
            Refinement::Augmented { lp: next, min_reduced_cost, .. } => {
                if round == max_rounds {
                    let best = RefinedSolution {
                        solution,
                        lp: next,
                        rounds: round,
                        history,
                        max_dual_violation: (-min_reduced_cost).max(0.0),
                    };
                    return Err(Error::NonConverged { rounds: round, min_reduced_cost, best: Box::new(best) });
                }
                lp = next;
            }
        }
    }
    unreachable!("loop returns on the last round")
}

/// Drops atoms lighter than `threshold` and renormalizes the rest.
pub fn discard_small_atoms(measure: &AtomicMeasure, threshold: f64) -> Result<AtomicMeasure> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Precondition(format!("discard threshold {threshold} outside [0, 1)")));
    }
    let kept: Vec<Atom> = measure.atoms.iter().filter(|a| a.weight >= threshold).cloned().collect();
    if kept.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if kept.len() == measure.atoms.len() {
        return Ok(measure.clone());
    }
    let total: f64 = kept.iter().map(|a| a.weight).sum();
    Ok(AtomicMeasure {
        atoms: kept.into_iter().map(|a| Atom { weight: a.weight / total, ..a }).collect(),
    })
}
