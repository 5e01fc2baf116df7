//! Independent oracles and residual checks: value iteration on the Bellman
//! equation, occupational measures of rollouts, and the optimality
//! conditions expressed through a value-function surrogate `ψ`.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{dot, CoefficientContext, MonomialBasis};
use crate::model::{admissible_controls, lex_cmp, tensor_grid, DiscreteControlProblem};
use crate::silp::{Atom, AtomicMeasure, CandidateSpec, DualCertificate, GridSpec};
use crate::synthesis::{gap_certificate, Rollout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    Nearest,
    Multilinear,
}

/// Values on a tensor grid over the state box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueFunctionGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: usize,
    pub values: Vec<f64>,
    pub mode: Interpolation,
    /// Sup-norm difference of every sweep.
    pub sweep_differences: Vec<f64>,
}

impl ValueFunctionGrid {
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        tensor_grid(&self.lower, &self.upper, &vec![self.points; self.lower.len()])
    }

    pub fn interpolate(&self, y: &[f64]) -> f64 {
        let mut corners = Vec::with_capacity(1 << y.len());
        self.stencil(y, &mut corners);
        corners.iter().map(|&(i, w)| w * self.values[i]).sum()
    }

    /// Grid indices and weights whose combination interpolates at `y`.
    fn stencil(&self, y: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        let dim = y.len();
        let n = self.points;
        let mut base = Vec::with_capacity(dim);
        let mut frac = Vec::with_capacity(dim);
        for k in 0..dim {
            let h = (self.upper[k] - self.lower[k]) / (n - 1) as f64;
            let s = ((y[k] - self.lower[k]) / h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            base.push(i);
            frac.push(s - i as f64);
        }
        match self.mode {
            Interpolation::Nearest => {
                let idx = (0..dim).fold(0, |acc, k| acc * n + base[k] + usize::from(frac[k] >= 0.5));
                out.push((idx, 1.0));
            }
            Interpolation::Multilinear => {
                for corner in 0..(1usize << dim) {
                    let mut idx = 0;
                    let mut w = 1.0;
                    for k in 0..dim {
                        let up = (corner >> (dim - 1 - k)) & 1 == 1;
                        idx = idx * n + base[k] + usize::from(up);
                        w *= if up { frac[k] } else { 1.0 - frac[k] };
                    }
                    if w != 0.0 {
                        out.push((idx, w));
                    }
                }
            }
        }
    }
}

/// Jacobi value iteration `V ← min_u {g + α V∘f}` on a tensor state grid.
///
/// Stops once the sup-norm sweep difference is at most `tol (1−α)/α`, which
/// bounds the distance to the discrete fixed point by `tol`.
pub fn value_iteration(
    problem: &DiscreteControlProblem,
    state_points: usize,
    control_points: usize,
    tol: f64,
    max_iter: usize,
    mode: Interpolation,
) -> Result<ValueFunctionGrid> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    if state_points < 2 {
        return Err(Error::Precondition("value iteration needs at least 2 nodes per axis".into()));
    }
    let region = problem.state_region();
    let mut grid = ValueFunctionGrid {
        lower: region.lower.clone(),
        upper: region.upper.clone(),
        points: state_points,
        values: Vec::new(),
        mode,
        sweep_differences: Vec::new(),
    };
    let nodes = grid.nodes();
    let controls = problem.control_grid(control_points);
    let alpha = problem.discount();

    // (cost, interpolation stencil of f(y, u)) per admissible transition
    type Transition = (f64, Vec<(usize, f64)>);
    let transitions: Vec<Vec<Transition>> = nodes
        .par_iter()
        .map(|y| -> Result<Vec<Transition>> {
            let adm = admissible_controls(problem, y, &controls)?;
            Ok(adm
                .iter()
                .map(|u| {
                    let mut st = Vec::new();
                    grid.stencil(&problem.dynamics(y, u), &mut st);
                    (problem.cost(y, u), st)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let threshold = tol * (1.0 - alpha) / alpha;
    let mut values = vec![0.0; nodes.len()];
    for _ in 0..max_iter {
        let next: Vec<f64> = transitions
            .par_iter()
            .map(|ts| {
                ts.iter()
                    .map(|(c, st)| c + alpha * st.iter().map(|&(i, w)| w * values[i]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let diff = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        grid.sweep_differences.push(diff);
        if diff <= threshold {
            grid.values = values;
            return Ok(grid);
        }
    }
    grid.values = values;
    let last_diff = grid.sweep_differences.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NotConverged { iterations: max_iter, last_diff, last: Box::new(grid) })
}

/// `H_ψ(y) = min_u {g(y,u) + α(ψ(f(y,u)) − ψ(y))}` over admissible grid controls.
pub fn hamiltonian_min(
    problem: &DiscreteControlProblem,
    psi: &dyn Fn(&[f64]) -> f64,
    y: &[f64],
    control_grid: &[Vec<f64>],
) -> Result<f64> {
    let alpha = problem.discount();
    let psi_y = psi(y);
    Ok(admissible_controls(problem, y, control_grid)?
        .iter()
        .map(|u| problem.cost(y, u) + alpha * (psi(&problem.dynamics(y, u)) - psi_y))
        .fold(f64::INFINITY, f64::min))
}

/// Discounted occupational measure of a finite rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationalMeasureApprox {
    pub atoms: Vec<Atom>,
    /// Final time `T` of the rollout.
    pub horizon: usize,
}

impl OccupationalMeasureApprox {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

/// Atom `(y(t), u(t))` with weight `(1−α)αᵗ`; bitwise-equal points are merged
/// in first-visit order.
pub fn occupational_measure(rollout: &Rollout) -> Result<OccupationalMeasureApprox> {
    let Some(horizon) = rollout.final_time() else {
        return Err(Error::Precondition("empty rollout".into()));
    };
    let alpha = rollout.discount;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut atoms: Vec<Atom> = Vec::new();
    let mut weight = 1.0 - alpha;
    for s in &rollout.steps {
        let key: Vec<u64> = s.state.iter().chain(&s.control).map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&k) => atoms[k].weight += weight,
            None => {
                index.insert(key, atoms.len());
                atoms.push(Atom {
                    point: crate::model::StateActionPoint::new(s.state.clone(), s.control.clone()),
                    weight,
                });
            }
        }
        weight *= alpha;
    }
    Ok(OccupationalMeasureApprox { atoms, horizon })
}

/// `Σ_j βⱼ · coefficientᵢ(yⱼ, uⱼ)` for every basis index.
pub fn measure_residuals(atoms: &[Atom], basis: &MonomialBasis, problem: &DiscreteControlProblem) -> Vec<f64> {
    let mut ctx = CoefficientContext::new(basis, problem);
    let mut col = vec![0.0; basis.len()];
    let mut out = vec![0.0; basis.len()];
    for a in atoms {
        ctx.column_into(problem, &a.point.state, &a.point.control, &mut col);
        for (o, c) in out.iter_mut().zip(&col) {
            *o += a.weight * c;
        }
    }
    out
}

/// `2 α^{T+1} max_i max_t |coefficientᵢ(y(t), u(t))|`
pub fn trajectory_residual_bound(rollout: &Rollout, basis: &MonomialBasis, problem: &DiscreteControlProblem) -> f64 {
    let horizon = rollout.final_time().unwrap_or(0);
    let mut ctx = CoefficientContext::new(basis, problem);
    let mut col = vec![0.0; basis.len()];
    let mut worst: f64 = 0.0;
    for s in &rollout.steps {
        ctx.column_into(problem, &s.state, &s.control, &mut col);
        worst = col.iter().fold(worst, |m, c| m.max(c.abs()));
    }
    2.0 * rollout.discount.powi(horizon as i32 + 1) * worst
}

/// Fails on the first pair of atoms with equal states and different controls.
pub fn check_assumption_two(measure: &AtomicMeasure) -> Result<()> {
    let mut atoms: Vec<&Atom> = measure.atoms.iter().collect();
    atoms.sort_by(|a, b| lex_cmp(&a.point.state, &b.point.state));
    for w in atoms.windows(2) {
        let same_state = w[0].point.state.iter().zip(&w[1].point.state).all(|(a, b)| (a - b).abs() <= 1e-12);
        let same_control = w[0].point.control.iter().zip(&w[1].point.control).all(|(a, b)| (a - b).abs() <= 1e-12);
        if same_state && !same_control {
            return Err(Error::AssumptionIIViolation {
                state: w[0].point.state.clone(),
                first: w[0].point.control.clone(),
                second: w[1].point.control.clone(),
            });
        }
    }
    Ok(())
}

/// Per-step residuals of the optimality conditions along a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// `E(y(t),u(t)) − min E` with `E = g + αψ∘f − ψ`, minimum over the
    /// check grid and the rollout points; nonnegative by construction.
    pub stationarity: Vec<f64>,
    /// `ψ(y(t)) − V(y(t))` per step.
    pub value_offsets: Vec<f64>,
    /// Standard deviation of `value_offsets`.
    pub value_agreement: f64,
    /// `|H_ψ(y(t)) − (1−α)ψ(y(t)) − (1−α)(V(y₀) − ψ(y₀))|` per step.
    pub hamiltonian: Vec<f64>,
    pub kappa_tol: f64,
}

impl OptimalityReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_hamiltonian(&self) -> f64 {
        self.hamiltonian.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_stationarity() <= self.kappa_tol
            && self.value_agreement <= self.kappa_tol
            && self.max_hamiltonian() <= self.kappa_tol
    }
}

fn psi_fn<'a>(basis: &'a MonomialBasis, certificate: &'a DualCertificate) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |y: &[f64]| basis.combine(&certificate.lambda, y)
}

pub fn check_optimality_conditions(
    problem: &DiscreteControlProblem,
    basis: &MonomialBasis,
    rollout: &Rollout,
    certificate: &DualCertificate,
    value_grid: &ValueFunctionGrid,
    grid: &GridSpec,
    kappa_tol: f64,
) -> Result<OptimalityReport> {
    let alpha = problem.discount();
    let psi = psi_fn(basis, certificate);
    let lambda = &certificate.lambda;
    let n = basis.len();
    // E(y,u) = g + αψ(f) − ψ(y) = g + Σλᵢcoefᵢ − (1−α)ψ(y₀)
    let psi_y0 = psi(problem.initial_state());
    let shift = (1.0 - alpha) * psi_y0;
    let expression = |ctx: &mut CoefficientContext, col: &mut Vec<f64>, y: &[f64], u: &[f64]| {
        ctx.column_into(problem, y, u, col);
        problem.cost(y, u) + dot(lambda, col) - shift
    };

    let controls = problem.control_grid(grid.control_points);
    let states = problem.state_grid(grid.state_points);
    let grid_min = states
        .par_iter()
        .map_init(
            || (CoefficientContext::new(basis, problem), vec![0.0; n]),
            |(ctx, col), y| {
                controls
                    .iter()
                    .filter(|u| problem.is_admissible(y, u))
                    .map(|u| expression(ctx, col, y, u))
                    .fold(f64::INFINITY, f64::min)
            },
        )
        .reduce(|| f64::INFINITY, f64::min);

    let mut ctx = CoefficientContext::new(basis, problem);
    let mut col = vec![0.0; n];
    let along: Vec<f64> = rollout
        .steps
        .iter()
        .map(|s| expression(&mut ctx, &mut col, &s.state, &s.control))
        .collect();
    let floor = along.iter().copied().fold(grid_min, f64::min);
    let stationarity = along.iter().map(|e| e - floor).collect();

    let value_offsets: Vec<f64> = rollout
        .steps
        .iter()
        .map(|s| psi(&s.state) - value_grid.interpolate(&s.state))
        .collect();
    let mean = value_offsets.iter().sum::<f64>() / value_offsets.len().max(1) as f64;
    let value_agreement =
        (value_offsets.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / value_offsets.len().max(1) as f64).sqrt();

    let v_y0 = value_grid.interpolate(problem.initial_state());
    let target = (1.0 - alpha) * (v_y0 - psi_y0);
    let hamiltonian = rollout
        .steps
        .iter()
        .map(|s| {
            let h = hamiltonian_min(problem, &psi, &s.state, &controls)?;
            Ok((h - (1.0 - alpha) * psi(&s.state) - target).abs())
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(OptimalityReport { stationarity, value_offsets, value_agreement, hamiltonian, kappa_tol })
}

/// `max_y ψ(y) − V(y) − (ψ(y₀) − V(y₀))` over the value-grid nodes.
pub fn check_psi_bound(
    problem: &DiscreteControlProblem,
    basis: &MonomialBasis,
    certificate: &DualCertificate,
    value_grid: &ValueFunctionGrid,
) -> f64 {
    let psi = psi_fn(basis, certificate);
    let y0 = problem.initial_state();
    let offset = psi(y0) - value_grid.interpolate(y0);
    value_grid
        .nodes()
        .iter()
        .zip(&value_grid.values)
        .map(|(y, v)| psi(y) - v - offset)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// With `ψ̃ = ψ − ψ(y₀) + value_at_y0`, returns
/// `max_y −(H_ψ̃(y) − (1−α)ψ̃(y))` over the state grid.
pub fn check_shifted_inequality(
    problem: &DiscreteControlProblem,
    psi: &(dyn Fn(&[f64]) -> f64 + Sync),
    value_at_y0: f64,
    grid: &GridSpec,
) -> Result<f64> {
    let alpha = problem.discount();
    let shift = value_at_y0 - psi(problem.initial_state());
    let shifted = |y: &[f64]| psi(y) + shift;
    let controls = problem.control_grid(grid.control_points);
    problem
        .state_grid(grid.state_points)
        .par_iter()
        .map(|y| Ok(-(hamiltonian_min(problem, &shifted, y, &controls)? - (1.0 - alpha) * shifted(y))))
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Empirical estimate of the finite-basis deficit `κ_N`: the value increment
/// from one more degree plus the gap to the value-iteration oracle.
pub fn kappa_estimate(mu: f64, mu_next_degree: f64, oracle_value_at_y0: f64, alpha: f64) -> f64 {
    (mu_next_degree - mu).max(0.0) + ((1.0 - alpha) * oracle_value_at_y0 - mu).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// PASS/FAIL table for a full verification run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub kappa_estimate: Option<f64>,
}

impl VerificationReport {
    /// Records `value ≤ threshold`.
    pub fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(CheckResult { name: name.into(), value, threshold, pass: value <= threshold });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<4} {:<34} {:>14.6e}  (<= {:.3e})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            )?;
        }
        if let Some(k) = self.kappa_estimate {
            writeln!(f, "info kappa_N estimate                   {k:>14.6e}")?;
        }
        writeln!(f, "overall: {}", if self.all_pass() { "PASS" } else { "FAIL" })
    }
}

/// Inputs of [`verify_run`].
pub struct RunArtifacts<'a> {
    pub problem: &'a DiscreteControlProblem,
    pub basis: &'a MonomialBasis,
    pub measure: &'a AtomicMeasure,
    pub certificate: &'a DualCertificate,
    /// Primal LP value.
    pub value: f64,
    pub rollout: &'a Rollout,
    pub candidates: &'a CandidateSpec,
    pub oracle: &'a ValueFunctionGrid,
    /// Control grid for Hamiltonian minimizations.
    pub control_points: usize,
}

/// Slacks of [`verify_run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub duality: f64,
    pub weight_sum: f64,
    pub residual: f64,
    pub dual_feasibility: f64,
    pub kappa: f64,
    pub gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { duality: 1e-6, weight_sum: 1e-9, residual: 1e-6, dual_feasibility: 1e-6, kappa: 0.15, gap: 0.35 }
    }
}

/// Runs every check on a solved LP, a rollout and a value-iteration oracle.
pub fn verify_run(run: &RunArtifacts<'_>, tol: &Tolerances) -> Result<VerificationReport> {
    let p = run.problem;
    let alpha = p.discount();
    let lower_bound = run.certificate.mu / (1.0 - alpha);
    let mut report = VerificationReport::default();

    report.at_most("strong duality |value - mu|", (run.value - run.certificate.mu).abs(), tol.duality);
    report.at_most("support size", run.measure.len() as f64, (run.basis.len() + 1) as f64);
    report.at_most("weight sum |sum beta - 1|", (run.measure.total_weight() - 1.0).abs(), tol.weight_sum);
    let residual = measure_residuals(&run.measure.atoms, run.basis, p)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    report.at_most("lp measure residuals", residual, tol.residual);

    let candidates = crate::silp::candidate_points(p, run.candidates, Some(run.measure));
    let min_rc = crate::silp::reduced_costs(p, run.basis, run.certificate, &candidates)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    report.at_most("dual feasibility on candidates", (-min_rc).max(0.0), tol.dual_feasibility);

    let occupation = occupational_measure(run.rollout)?;
    let traj = measure_residuals(&occupation.atoms, run.basis, p)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    report.at_most("trajectory residuals", traj, trajectory_residual_bound(run.rollout, run.basis, p) + 1e-12);

    let oracle_y0 = run.oracle.interpolate(p.initial_state());
    report.at_most("oracle |V_vi(y0) - mu/(1-alpha)|", (oracle_y0 - lower_bound).abs(), tol.gap);

    let grid = GridSpec::new(run.oracle.points, run.control_points);
    let optimality =
        check_optimality_conditions(p, run.basis, run.rollout, run.certificate, run.oracle, &grid, tol.kappa)?;
    report.at_most("stationarity (a)", optimality.max_stationarity(), tol.kappa);
    report.at_most("value agreement (b)", optimality.value_agreement, tol.kappa);
    report.at_most("hamiltonian identity (c)", optimality.max_hamiltonian(), tol.kappa);
    report.at_most("psi bound", check_psi_bound(p, run.basis, run.certificate, run.oracle).max(0.0), tol.kappa);
    let psi = psi_fn(run.basis, run.certificate);
    let shifted = check_shifted_inequality(p, &psi, oracle_y0, &grid)?;
    report.at_most("shifted inequality", shifted.max(0.0), tol.kappa);

    let gap = gap_certificate(run.rollout, run.certificate);
    report.at_most("gap certificate", gap, tol.gap);
    Ok(report)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_problem, BoxRegion, ControlSet, ProblemDef, ProblemOverrides, StateActionPoint};
    use crate::synthesis::{rollout, Horizon, RolloutSpec, RolloutStep};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn shift() -> DiscreteControlProblem {
        builtin_problem("shift", &ProblemOverrides::default()).unwrap()
    }

    fn shift_rollout(p: &DiscreteControlProblem, t: usize) -> Rollout {
        let zero = |_: &DiscreteControlProblem, _: &[f64]| -> Result<Vec<f64>> { Ok(vec![0.0]) };
        rollout(p, &zero, &RolloutSpec::new(p, Horizon::Fixed(t))).unwrap()
    }

    #[test]
    fn shift_value_iteration_is_exact_at_nodes() {
        let p = shift();
        let v = value_iteration(&p, 11, 11, 1e-12, 1000, Interpolation::Multilinear).unwrap();
        assert_abs_diff_eq!(v.interpolate(&[0.4]), 0.4, epsilon = 1e-12);
        for (y, val) in v.nodes().iter().zip(&v.values) {
            assert_abs_diff_eq!(*val, y[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_cost_value() {
        let p = DiscreteControlProblem::new(ProblemDef {
            name: "const".into(),
            dynamics: Arc::new(|_, u, next| next[0] = u[0]),
            cost: Arc::new(|_, _| 2.0),
            state_region: BoxRegion::cube(1, 0.0, 1.0).unwrap(),
            control_region: ControlSet::Box(BoxRegion::cube(1, 0.0, 1.0).unwrap()),
            control_predicate: None,
            discount: 0.8,
            initial_state: vec![0.5],
        })
        .unwrap();
        let v = value_iteration(&p, 5, 5, 1e-10, 10_000, Interpolation::Nearest).unwrap();
        assert!(v.values.iter().all(|x| (x - 10.0).abs() <= 1e-10));
        // contraction: successive differences shrink by at most α
        let d = &v.sweep_differences;
        assert!(d.windows(2).all(|w| w[1] <= 0.8 * w[0] + 1e-9));
    }

    #[test]
    fn value_iteration_guards() {
        let p = shift();
        assert!(value_iteration(&p, 11, 11, 0.0, 10, Interpolation::Multilinear).is_err());
        assert!(matches!(
            value_iteration(&builtin_problem("example1", &ProblemOverrides::default()).unwrap(), 5, 3, 1e-12, 2, Interpolation::Multilinear),
            Err(Error::NotConverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn hamiltonian_examples() {
        let p = shift();
        let controls = p.control_grid(11);
        let zero = |_: &[f64]| 0.0;
        assert_abs_diff_eq!(hamiltonian_min(&p, &zero, &[0.7], &controls).unwrap(), 0.7, epsilon = 1e-15);
        let v = |y: &[f64]| y[0];
        let h = hamiltonian_min(&p, &v, &[0.4], &controls).unwrap();
        assert_abs_diff_eq!(h, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(h, (1.0 - p.discount()) * 0.4, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_identity_on_oracle() {
        let p = builtin_problem("example1", &ProblemOverrides::default()).unwrap();
        let v = value_iteration(&p, 11, 5, 1e-10, 10_000, Interpolation::Multilinear).unwrap();
        let controls = p.control_grid(5);
        let psi = |y: &[f64]| v.interpolate(y);
        for (y, val) in v.nodes().iter().zip(&v.values).step_by(7) {
            let h = hamiltonian_min(&p, &psi, y, &controls).unwrap();
            assert_abs_diff_eq!(h - (1.0 - p.discount()) * val, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn shift_occupational_measure() {
        let p = shift();
        let r = shift_rollout(&p, 30);
        let m = occupational_measure(&r).unwrap();
        assert_eq!(m.atoms.len(), 2);
        assert_eq!(m.atoms[0].point, StateActionPoint::new(vec![0.4], vec![0.0]));
        assert_abs_diff_eq!(m.atoms[0].weight, 0.5, epsilon = 1e-15);
        // 0.25 + 0.125 + ... up to t = 30
        assert_abs_diff_eq!(m.atoms[1].weight, 0.5 - 0.5f64.powi(31), epsilon = 1e-15);
        assert_abs_diff_eq!(m.total_weight(), 1.0 - 0.5f64.powi(31), epsilon = 1e-15);
    }

    #[test]
    fn stationary_rollout_single_atom() {
        let p = builtin_problem("example1", &ProblemOverrides { alpha: None, y0: Some(vec![0.2, -0.6]) }).unwrap();
        // u = -y keeps the state fixed
        let hold = |_: &DiscreteControlProblem, y: &[f64]| -> Result<Vec<f64>> { Ok(y.iter().map(|v| -v).collect()) };
        let r = rollout(&p, &hold, &RolloutSpec::new(&p, Horizon::Fixed(40))).unwrap();
        let m = occupational_measure(&r).unwrap();
        assert_eq!(m.atoms.len(), 1);
        assert_abs_diff_eq!(m.atoms[0].weight, 1.0 - 0.9f64.powi(41), epsilon = 1e-14);
    }

    #[test]
    fn shift_residuals_decay() {
        let p = shift();
        let basis = MonomialBasis::new(1, 3);
        let mut last = f64::INFINITY;
        for t in [2, 5, 10, 20] {
            let r = shift_rollout(&p, t);
            let m = occupational_measure(&r).unwrap();
            let res = measure_residuals(&m.atoms, &basis, &p);
            assert_eq!(res[0], 0.0);
            let worst = res.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(worst <= trajectory_residual_bound(&r, &basis, &p) + 1e-15);
            assert!(worst < last);
            last = worst;
        }
    }

    #[test]
    fn exact_certificate_shift_checks() {
        let p = shift();
        let basis = MonomialBasis::new(1, 1);
        let cert = DualCertificate { lambda: vec![0.0, 1.0], mu: 0.2 };
        let v = value_iteration(&p, 11, 11, 1e-12, 1000, Interpolation::Multilinear).unwrap();
        let r = shift_rollout(&p, 20);
        let report = check_optimality_conditions(&p, &basis, &r, &cert, &v, &GridSpec::new(11, 11), 1e-12).unwrap();
        assert!(report.passes(), "{report:?}");
        assert!(report.stationarity.iter().all(|&s| s >= 0.0));
        assert_abs_diff_eq!(check_psi_bound(&p, &basis, &cert, &v), 0.0, epsilon = 1e-12);
        let psi = |y: &[f64]| y[0];
        let viol = check_shifted_inequality(&p, &psi, 0.4, &GridSpec::new(11, 11)).unwrap();
        assert!(viol <= 1e-12);
    }

    #[test]
    fn half_cost_psi_satisfies_bound() {
        // ψ(y) = ½g(y) away from y₀ and 0; the bound ψ ≤ V + ψ(y₀) − V(y₀) holds
        let p = shift();
        let v = value_iteration(&p, 11, 11, 1e-12, 1000, Interpolation::Multilinear).unwrap();
        let psi = |y: &[f64]| if (y[0] - 0.4).abs() < 1e-12 { y[0] } else { 0.5 * y[0] };
        let offset = psi(&[0.4]) - v.interpolate(&[0.4]);
        let worst = v
            .nodes()
            .iter()
            .zip(&v.values)
            .map(|(y, val)| psi(y) - val - offset)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= 1e-12);
    }

    #[test]
    fn raised_psi_violates_shifted_inequality_by_the_shift() {
        let p = shift();
        let psi = |y: &[f64]| y[0];
        let c = 0.05;
        // H is shift invariant, so raising ψ̃ by c costs exactly (1−α)c
        let viol = check_shifted_inequality(&p, &psi, 0.4 + c, &GridSpec::new(11, 11)).unwrap();
        assert_abs_diff_eq!(viol, (1.0 - p.discount()) * c, epsilon = 1e-12);
    }

    #[test]
    fn assumption_two_check() {
        let ok = AtomicMeasure {
            atoms: vec![
                Atom { point: StateActionPoint::new(vec![0.1], vec![0.0]), weight: 0.5 },
                Atom { point: StateActionPoint::new(vec![0.2], vec![1.0]), weight: 0.5 },
            ],
        };
        assert!(check_assumption_two(&ok).is_ok());
        let bad = AtomicMeasure {
            atoms: vec![
                Atom { point: StateActionPoint::new(vec![0.1], vec![0.0]), weight: 0.5 },
                Atom { point: StateActionPoint::new(vec![0.1], vec![1.0]), weight: 0.5 },
            ],
        };
        assert!(check_assumption_two(&bad).is_err());
    }

    #[test]
    fn interpolation_modes() {
        let g = ValueFunctionGrid {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            points: 2,
            values: vec![0.0, 1.0, 2.0, 3.0],
            mode: Interpolation::Multilinear,
            sweep_differences: vec![],
        };
        // bilinear f = 2y₁ + y₂
        assert_abs_diff_eq!(g.interpolate(&[0.25, 0.5]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.interpolate(&[1.0, 1.0]), 3.0, epsilon = 1e-15);
        let near = ValueFunctionGrid { mode: Interpolation::Nearest, ..g };
        assert_eq!(near.interpolate(&[0.6, 0.2]), 2.0);
    }

    #[test]
    fn empty_rollout_rejected() {
        let r = Rollout { discount: 0.5, steps: Vec::<RolloutStep>::new(), truncated_value: 0.0, truncation_bound: 0.0, gap: None };
        assert!(occupational_measure(&r).is_err());
    }
}
