//! Feedback controls from the dual certificate or from the atoms, rollouts
//! and the suboptimality gap.

use serde::{Deserialize, Serialize};

use crate::basis::{dot, BasisScratch, MonomialBasis};
use crate::model::{admissible_controls, lex_cmp, step, ControlSet, DiscreteControlProblem};
use crate::silp::{AtomicMeasure, DualCertificate};
use crate::{Error, Result};

/// Hard cap on the rollout horizon.
pub const MAX_HORIZON: usize = 100_000;

const TIE_TOL: f64 = 1e-12;

pub trait FeedbackPolicy {
    fn control(&self, problem: &DiscreteControlProblem, y: &[f64]) -> Result<Vec<f64>>;
}

impl<F> FeedbackPolicy for F
where
    F: Fn(&DiscreteControlProblem, &[f64]) -> Result<Vec<f64>>,
{
    fn control(&self, problem: &DiscreteControlProblem, y: &[f64]) -> Result<Vec<f64>> {
        self(problem, y)
    }
}

/// `argmin_u g(y, u) + α ψ(f(y, u))` over the admissible grid controls.
/// Ties (within 1e-12) go to the lexicographically smallest control.
pub fn minimizer_control(
    problem: &DiscreteControlProblem,
    basis: &MonomialBasis,
    certificate: &DualCertificate,
    y: &[f64],
    control_grid: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut controls = admissible_controls(problem, y, control_grid)?;
    controls.sort_by(|a, b| lex_cmp(a, b));
    let objective = Objective::new(problem, basis, certificate);
    let mut best: Option<(f64, &Vec<f64>)> = None;
    let mut scratch = objective.scratch();
    for u in &controls {
        let v = objective.eval(y, u, &mut scratch);
        if best.is_none_or(|(bv, _)| v < bv - TIE_TOL) {
            best = Some((v, u));
        }
    }
    Ok(best.expect("admissible set is nonempty").1.clone())
}

struct Objective<'a> {
    problem: &'a DiscreteControlProblem,
    basis: &'a MonomialBasis,
    certificate: &'a DualCertificate,
}

struct ObjectiveScratch {
    next: Vec<f64>,
    phi: Vec<f64>,
    basis: BasisScratch,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a DiscreteControlProblem, basis: &'a MonomialBasis, certificate: &'a DualCertificate) -> Self {
        Self { problem, basis, certificate }
    }

    fn scratch(&self) -> ObjectiveScratch {
        ObjectiveScratch {
            next: vec![0.0; self.problem.state_dim()],
            phi: vec![0.0; self.basis.len()],
            basis: BasisScratch::new(self.basis),
        }
    }

    fn eval(&self, y: &[f64], u: &[f64], s: &mut ObjectiveScratch) -> f64 {
        self.problem.dynamics_into(y, u, &mut s.next);
        self.basis.evaluate_into(&s.next, &mut s.basis, &mut s.phi);
        self.problem.cost(y, u) + self.problem.discount() * dot(&self.certificate.lambda, &s.phi)
    }
}

/// Feedback rule built from the certificate by minimizing over a control grid.
pub struct MinimizerPolicy<'a> {
    pub basis: &'a MonomialBasis,
    pub certificate: &'a DualCertificate,
    pub control_grid: Vec<Vec<f64>>,
    /// Coordinatewise golden-section refinement inside the winning grid cell.
    pub polish: bool,
}

impl FeedbackPolicy for MinimizerPolicy<'_> {
    fn control(&self, problem: &DiscreteControlProblem, y: &[f64]) -> Result<Vec<f64>> {
        let u = minimizer_control(problem, self.basis, self.certificate, y, &self.control_grid)?;
        if !self.polish {
            return Ok(u);
        }
        let ControlSet::Box(region) = problem.control_region() else {
            return Ok(u);
        };
        let points = (self.control_grid.len() as f64).powf(1.0 / problem.control_dim() as f64).round() as usize;
        let cell = region.cell_width(points.max(2));
        let objective = Objective::new(problem, self.basis, self.certificate);
        let mut scratch = objective.scratch();
        let mut best = u;
        let mut best_val = objective.eval(y, &best, &mut scratch);
        for k in 0..best.len() {
            let lo = (best[k] - cell[k]).max(region.lower[k]);
            let hi = (best[k] + cell[k]).min(region.upper[k]);
            let mut trial = best.clone();
            let arg = golden_section(lo, hi, 60, |v| {
                trial[k] = v;
                if problem.is_admissible(y, &trial) {
                    objective.eval(y, &trial, &mut scratch)
                } else {
                    f64::INFINITY
                }
            });
            trial[k] = arg;
            let val = if problem.is_admissible(y, &trial) {
                objective.eval(y, &trial, &mut scratch)
            } else {
                f64::INFINITY
            };
            if val < best_val - TIE_TOL {
                best = trial;
                best_val = val;
            }
        }
        Ok(best)
    }
}

fn golden_section(mut lo: f64, mut hi: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        a
    } else {
        b
    }
}

/// Control of the atom whose state is nearest to `y` (Euclidean). Among
/// equidistant atoms the heaviest wins, then lexicographic order on `(y, u)`.
/// Fails if the selected atom's state carries a second, different control.
pub fn heuristic_control(measure: &AtomicMeasure, y: &[f64]) -> Result<Vec<f64>> {
    let distance = |s: &[f64]| s.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let dmin = measure
        .atoms
        .iter()
        .map(|a| distance(&a.point.state))
        .fold(f64::INFINITY, f64::min);
    if !dmin.is_finite() {
        return Err(Error::Precondition("heuristic control needs a nonempty measure".into()));
    }
    let chosen = measure
        .atoms
        .iter()
        .filter(|a| distance(&a.point.state) <= dmin + TIE_TOL)
        .min_by(|a, b| {
            b.weight
                .total_cmp(&a.weight)
                .then_with(|| lex_cmp(&a.point.state, &b.point.state))
                .then_with(|| lex_cmp(&a.point.control, &b.point.control))
        })
        .expect("at least one atom attains the minimum");
    let same_state = |s: &[f64]| s.iter().zip(&chosen.point.state).all(|(a, b)| (a - b).abs() <= TIE_TOL);
    let differs = |u: &[f64]| u.iter().zip(&chosen.point.control).any(|(a, b)| (a - b).abs() > TIE_TOL);
    if let Some(other) = measure
        .atoms
        .iter()
        .find(|a| same_state(&a.point.state) && differs(&a.point.control))
    {
        return Err(Error::AssumptionIIViolation {
            state: chosen.point.state.clone(),
            first: chosen.point.control.clone(),
            second: other.point.control.clone(),
        });
    }
    Ok(chosen.point.control.clone())
}

pub struct HeuristicPolicy<'a> {
    pub measure: &'a AtomicMeasure,
}

impl FeedbackPolicy for HeuristicPolicy<'_> {
    fn control(&self, _problem: &DiscreteControlProblem, y: &[f64]) -> Result<Vec<f64>> {
        heuristic_control(self.measure, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// Smallest `T` with `α^{T+1} Ĝ / (1−α) ≤ ε`.
    Epsilon(f64),
    /// Explicit final time `T` (rows `t = 0..=T`).
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSpec {
    pub horizon: Horizon,
    /// `Ĝ`, a bound on `|g|` over a state/control sample.
    pub cost_bound: f64,
}

impl RolloutSpec {
    /// `Ĝ` from a 21-point-per-axis sample of the problem's regions.
    pub fn new(problem: &DiscreteControlProblem, horizon: Horizon) -> Self {
        Self { horizon, cost_bound: problem.cost_bound(21, 21) }
    }

    /// Default tolerance `ε = 1e−3 Ĝ / (1−α)`.
    pub fn default_epsilon(problem: &DiscreteControlProblem) -> Self {
        let spec = Self::new(problem, Horizon::Fixed(0));
        let eps = 1e-3 * spec.cost_bound / (1.0 - problem.discount());
        Self { horizon: Horizon::Epsilon(eps), ..spec }
    }

    pub fn final_time(&self, alpha: f64) -> Result<usize> {
        match self.horizon {
            Horizon::Fixed(t) => Ok(t.min(MAX_HORIZON)),
            Horizon::Epsilon(eps) => {
                if !(eps > 0.0) {
                    return Err(Error::Precondition(format!("epsilon must be positive, got {eps}")));
                }
                let mut t = 0;
                while t < MAX_HORIZON && truncation_bound(alpha, t, self.cost_bound) > eps {
                    t += 1;
                }
                Ok(t)
            }
        }
    }
}

pub fn truncation_bound(alpha: f64, final_time: usize, cost_bound: f64) -> f64 {
    alpha.powi(final_time as i32 + 1) / (1.0 - alpha) * cost_bound
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub t: usize,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub discount: f64,
    pub steps: Vec<RolloutStep>,
    /// `Σ_{t=0}^{T} αᵗ g(y(t), u(t))`
    pub truncated_value: f64,
    pub truncation_bound: f64,
    /// Set by [`Rollout::with_gap`].
    pub gap: Option<f64>,
}

impl Rollout {
    pub fn final_time(&self) -> Option<usize> {
        self.steps.last().map(|s| s.t)
    }

    /// Backward (Horner) accumulation of the discounted cost.
    pub fn horner_value(&self, problem: &DiscreteControlProblem) -> f64 {
        self.steps
            .iter()
            .rev()
            .fold(0.0, |acc, s| problem.cost(&s.state, &s.control) + self.discount * acc)
    }

    pub fn with_gap(mut self, certificate: &DualCertificate) -> Self {
        self.gap = Some(gap_certificate(&self, certificate));
        self
    }
}

/// Simulates `y(t+1) = f(y(t), u(y(t)))` from the initial state.
pub fn rollout(problem: &DiscreteControlProblem, policy: &dyn FeedbackPolicy, spec: &RolloutSpec) -> Result<Rollout> {
    let alpha = problem.discount();
    let final_time = spec.final_time(alpha)?;
    let mut steps = Vec::with_capacity(final_time + 1);
    let mut value = 0.0;
    let mut weight = 1.0;
    let mut y = problem.initial_state().to_vec();
    let partial = |steps: &Vec<RolloutStep>, value: f64| Rollout {
        discount: alpha,
        steps: steps.clone(),
        truncated_value: value,
        truncation_bound: truncation_bound(alpha, steps.len().saturating_sub(1), spec.cost_bound),
        gap: None,
    };
    for t in 0..=final_time {
        let checked = policy.control(problem, &y).and_then(|u| {
            if problem.is_admissible(&y, &u) {
                Ok(u)
            } else {
                Err(Error::InadmissibleTransition { state: y.clone(), control: u.clone(), next: problem.dynamics(&y, &u) })
            }
        });
        let u = checked.map_err(|e| Error::RolloutAborted {
            t,
            partial: Box::new(partial(&steps, value)),
            source: Box::new(e),
        })?;
        value += weight * problem.cost(&y, &u);
        weight *= alpha;
        let next = if t < final_time { Some(step(problem, &y, &u)?) } else { None };
        steps.push(RolloutStep { t, state: std::mem::take(&mut y), control: u });
        if let Some(next) = next {
            y = next;
        }
    }
    Ok(Rollout {
        discount: alpha,
        steps,
        truncated_value: value,
        truncation_bound: truncation_bound(alpha, final_time, spec.cost_bound),
        gap: None,
    })
}

/// `|V_N(y₀) − μ/(1−α)|`
pub fn gap_certificate(rollout: &Rollout, certificate: &DualCertificate) -> f64 {
    (rollout.truncated_value - certificate.mu / (1.0 - rollout.discount)).abs()
}

/// Smallest `p ≥ 1` with `u(t+p) = u(t)` for every `t ≥ from_t` in range,
/// requiring at least two full periods after `from_t`.
pub fn control_pattern(rollout: &Rollout, from_t: usize) -> Option<usize> {
    let controls: Vec<&[f64]> = rollout.steps.iter().skip(from_t).map(|s| s.control.as_slice()).collect();
    let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
    (1..=controls.len() / 2).find(|&p| (0..controls.len() - p).all(|t| same(controls[t], controls[t + p])))
}
