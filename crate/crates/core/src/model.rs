//! Control problems, admissibility and the built-in benchmark problems.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack applied on box faces by every membership test.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// `next = f(state, control)`, written into a caller-provided buffer.
pub type DynamicsFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Extra state-dependent restriction of the control set, `u ∈ U(y)`.
pub type ControlPredicate = Arc<dyn Fn(&[f64], &[f64]) -> bool + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidProblem(format!(
                "box bounds have mismatched or zero dimension ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidProblem(format!("degenerate box {lower:?}..{upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - MEMBERSHIP_TOL && *v <= hi + MEMBERSHIP_TOL)
    }

    /// Length of one cell of a uniform grid with `points` nodes per axis.
    pub fn cell_width(&self, points: usize) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| if points > 1 { (hi - lo) / (points - 1) as f64 } else { hi - lo })
            .collect()
    }

    /// Tensor grid with `points` nodes per axis, first axis slowest.
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        tensor_grid(&self.lower, &self.upper, &vec![points; self.dim()])
    }
}

/// Nodes of a uniform tensor grid in lexicographic order (first axis slowest).
pub fn tensor_grid(lower: &[f64], upper: &[f64], points: &[usize]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .zip(points)
        .map(|((&lo, &hi), &n)| axis_nodes(lo, hi, n))
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        out.push(idx.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect());
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// `n` equally spaced nodes on `[lo, hi]`, endpoints included exactly.
pub fn axis_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlSet {
    Box(BoxRegion),
    Finite(Vec<Vec<f64>>),
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box(b) => b.dim(),
            ControlSet::Finite(pts) => pts.first().map_or(0, Vec::len),
        }
    }

    /// Grid controls in lexicographic order. Finite sets ignore `points`.
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        match self {
            ControlSet::Box(b) => b.grid(points),
            ControlSet::Finite(pts) => {
                let mut pts = pts.clone();
                pts.sort_by(|a, b| lex_cmp(a, b));
                pts
            }
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        match self {
            ControlSet::Box(b) => b.contains(u),
            ControlSet::Finite(pts) => pts
                .iter()
                .any(|p| p.len() == u.len() && p.iter().zip(u).all(|(a, b)| (a - b).abs() <= MEMBERSHIP_TOL)),
        }
    }
}

/// Total order on vectors used for every lexicographic tie-break.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// A state/control pair; admissible when it lies in the graph `G` of the
/// admissible action map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionPoint {
    pub state: Vec<f64>,
    pub control: Vec<f64>,
}

impl StateActionPoint {
    pub fn new(state: Vec<f64>, control: Vec<f64>) -> Self {
        Self { state, control }
    }
}

/// Everything needed to build a [`DiscreteControlProblem`].
pub struct ProblemDef {
    pub name: String,
    pub dynamics: DynamicsFn,
    pub cost: CostFn,
    pub state_region: BoxRegion,
    pub control_region: ControlSet,
    pub control_predicate: Option<ControlPredicate>,
    pub discount: f64,
    pub initial_state: Vec<f64>,
}

/// Deterministic discounted control problem
/// `min Σ αᵗ g(y(t), u(t))`, `y(t+1) = f(y(t), u(t))`, `y(t) ∈ Y`, `u(t) ∈ U(y(t))`.
///
/// Immutable after construction; cheap to clone and share across threads.
#[derive(Clone)]
pub struct DiscreteControlProblem {
    name: String,
    dynamics: DynamicsFn,
    cost: CostFn,
    state_region: BoxRegion,
    control_region: ControlSet,
    control_predicate: Option<ControlPredicate>,
    discount: f64,
    initial_state: Vec<f64>,
}

impl fmt::Debug for DiscreteControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteControlProblem")
            .field("name", &self.name)
            .field("state_region", &self.state_region)
            .field("control_region", &self.control_region)
            .field("discount", &self.discount)
            .field("initial_state", &self.initial_state)
            .finish_non_exhaustive()
    }
}

impl DiscreteControlProblem {
    pub fn new(def: ProblemDef) -> Result<Self> {
        if !(def.discount > 0.0 && def.discount < 1.0) {
            return Err(Error::InvalidProblem(format!(
                "discount must lie in (0, 1), got {}",
                def.discount
            )));
        }
        if def.control_region.dim() == 0 {
            return Err(Error::InvalidProblem("empty control set".into()));
        }
        if !def.state_region.contains(&def.initial_state) {
            return Err(Error::InvalidProblem(format!(
                "initial state {:?} is outside the state region",
                def.initial_state
            )));
        }
        Ok(Self {
            name: def.name,
            dynamics: def.dynamics,
            cost: def.cost,
            state_region: def.state_region,
            control_region: def.control_region,
            control_predicate: def.control_predicate,
            discount: def.discount,
            initial_state: def.initial_state,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_region.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control_region.dim()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn state_region(&self) -> &BoxRegion {
        &self.state_region
    }

    pub fn control_region(&self) -> &ControlSet {
        &self.control_region
    }

    pub fn cost(&self, y: &[f64], u: &[f64]) -> f64 {
        (self.cost)(y, u)
    }

    /// `f(y, u)` without the admissibility check.
    pub fn dynamics(&self, y: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.state_dim()];
        (self.dynamics)(y, u, &mut next);
        next
    }

    pub fn dynamics_into(&self, y: &[f64], u: &[f64], next: &mut [f64]) {
        (self.dynamics)(y, u, next)
    }

    /// `u ∈ U(y)` and `f(y, u) ∈ Y`.
    pub fn is_admissible(&self, y: &[f64], u: &[f64]) -> bool {
        self.in_control_set(y, u) && self.state_region.contains(&self.dynamics(y, u))
    }

    fn in_control_set(&self, y: &[f64], u: &[f64]) -> bool {
        self.control_region.contains(u) && self.control_predicate.as_ref().is_none_or(|p| p(y, u))
    }

    pub fn state_grid(&self, points: usize) -> Vec<Vec<f64>> {
        self.state_region.grid(points)
    }

    pub fn control_grid(&self, points: usize) -> Vec<Vec<f64>> {
        self.control_region.grid(points)
    }

    /// `max |g|` over a state/control sample; used for truncation bounds.
    pub fn cost_bound(&self, state_points: usize, control_points: usize) -> f64 {
        let controls = self.control_grid(control_points);
        self.state_grid(state_points)
            .iter()
            .flat_map(|y| controls.iter().map(move |u| (y, u)))
            .filter(|(y, u)| self.in_control_set(y, u))
            .map(|(y, u)| self.cost(y, u).abs())
            .fold(0.0, f64::max)
    }

    /// Viability at grid resolution: every grid state has an admissible grid control.
    pub fn check_viability(&self, state_points: usize, control_points: usize) -> Result<()> {
        let controls = self.control_grid(control_points);
        for y in self.state_grid(state_points) {
            admissible_controls(self, &y, &controls)?;
        }
        Ok(())
    }
}

/// Grid controls `u` with `u ∈ U(y)` and `f(y, u) ∈ Y`, in grid order.
pub fn admissible_controls(
    problem: &DiscreteControlProblem,
    y: &[f64],
    control_grid: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if !problem.state_region.contains(y) {
        return Err(Error::StateOutsideRegion(y.to_vec()));
    }
    let mut next = vec![0.0; problem.state_dim()];
    let admissible: Vec<Vec<f64>> = control_grid
        .iter()
        .filter(|u| {
            if !problem.in_control_set(y, u) {
                return false;
            }
            problem.dynamics_into(y, u, &mut next);
            problem.state_region.contains(&next)
        })
        .cloned()
        .collect();
    if admissible.is_empty() {
        return Err(Error::AssumptionIViolation { state: y.to_vec() });
    }
    Ok(admissible)
}

/// One transition `f(y, u)`, rejected if it leaves the state region.
pub fn step(problem: &DiscreteControlProblem, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let next = problem.dynamics(y, u);
    if !problem.state_region.contains(&next) {
        return Err(Error::InadmissibleTransition {
            state: y.to_vec(),
            control: u.to_vec(),
            next,
        });
    }
    Ok(next)
}

/// Parameter overrides for the built-in problem families.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemOverrides {
    pub alpha: Option<f64>,
    pub y0: Option<Vec<f64>>,
}

type Constructor = fn(&ProblemOverrides) -> Result<DiscreteControlProblem>;

/// Compile-time problem registry. New families are added here.
const REGISTRY: &[(&str, Constructor)] = &[("example1", example1), ("shift", shift)];

pub fn builtin_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(name, _)| *name).collect()
}

pub fn builtin_problem(name: &str, overrides: &ProblemOverrides) -> Result<DiscreteControlProblem> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, build)| build(overrides))
        .unwrap_or_else(|| Err(Error::UnknownProblem(name.to_string())))
}

/// `fᵢ(y, u) = ½yᵢ − ½uᵢ`, `g(y, u) = −y₁u₂ + y₂u₁` on `Y = U = [−1, 1]²`.
fn example1(o: &ProblemOverrides) -> Result<DiscreteControlProblem> {
    DiscreteControlProblem::new(ProblemDef {
        name: "example1".into(),
        dynamics: Arc::new(|y, u, next| {
            next[0] = 0.5 * y[0] - 0.5 * u[0];
            next[1] = 0.5 * y[1] - 0.5 * u[1];
        }),
        cost: Arc::new(|y, u| -y[0] * u[1] + y[1] * u[0]),
        state_region: BoxRegion::cube(2, -1.0, 1.0)?,
        control_region: ControlSet::Box(BoxRegion::cube(2, -1.0, 1.0)?),
        control_predicate: None,
        discount: o.alpha.unwrap_or(0.9),
        initial_state: o.y0.clone().unwrap_or_else(|| vec![0.5, 0.25]),
    })
}

/// `y(t+1) = u(t)`, `g(y, u) = y` on `Y = U = [0, 1]`; optimal control is `u ≡ 0`
/// and `V(y) = g(y)`.
fn shift(o: &ProblemOverrides) -> Result<DiscreteControlProblem> {
    DiscreteControlProblem::new(ProblemDef {
        name: "shift".into(),
        dynamics: Arc::new(|_, u, next| next[0] = u[0]),
        cost: Arc::new(|y, _| y[0]),
        state_region: BoxRegion::cube(1, 0.0, 1.0)?,
        control_region: ControlSet::Box(BoxRegion::cube(1, 0.0, 1.0)?),
        control_predicate: None,
        discount: o.alpha.unwrap_or(0.5),
        initial_state: o.y0.clone().unwrap_or_else(|| vec![0.4]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex1() -> DiscreteControlProblem {
        builtin_problem("example1", &ProblemOverrides::default()).unwrap()
    }

    fn drift() -> DiscreteControlProblem {
        DiscreteControlProblem::new(ProblemDef {
            name: "drift".into(),
            dynamics: Arc::new(|y, u, next| next[0] = y[0] + u[0]),
            cost: Arc::new(|y, _| y[0]),
            state_region: BoxRegion::cube(1, 0.0, 1.0).unwrap(),
            control_region: ControlSet::Finite(vec![vec![-0.5], vec![0.5]]),
            control_predicate: None,
            discount: 0.5,
            initial_state: vec![0.0],
        })
        .unwrap()
    }

    #[test]
    fn example1_parameters() {
        let p = ex1();
        assert_eq!(p.discount(), 0.9);
        assert_eq!(p.initial_state(), &[0.5, 0.25]);
        assert_eq!(p.state_dim(), 2);
        assert_eq!(p.control_dim(), 2);
    }

    #[test]
    fn example1_every_grid_control_admissible() {
        let p = ex1();
        let controls = p.control_grid(9);
        let adm = admissible_controls(&p, &[0.5, 0.25], &controls).unwrap();
        assert_eq!(adm, controls);
        for y in p.state_grid(9) {
            for u in &controls {
                assert!(step(&p, &y, u).is_ok());
            }
        }
    }

    #[test]
    fn shift_admits_all_controls() {
        let p = builtin_problem("shift", &ProblemOverrides::default()).unwrap();
        let controls = vec![vec![0.0], vec![0.5], vec![1.0]];
        assert_eq!(admissible_controls(&p, &[0.3], &controls).unwrap(), controls);
    }

    #[test]
    fn boundary_filters_controls() {
        let p = drift();
        let controls = p.control_grid(0);
        assert_eq!(admissible_controls(&p, &[1.0], &controls).unwrap(), vec![vec![-0.5]]);
    }

    #[test]
    fn empty_admissible_set_is_an_error() {
        let p = drift();
        match admissible_controls(&p, &[0.5], &[vec![0.75]]) {
            Err(Error::AssumptionIViolation { state }) => assert_eq!(state, vec![0.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_matches_reported_transitions() {
        let p = ex1();
        assert_eq!(step(&p, &[0.5, 0.25], &[-1.0, 1.0]).unwrap(), vec![0.75, -0.375]);
        let y2 = step(&p, &[0.75, -0.375], &[-0.552, 1.0]).unwrap();
        assert_abs_diff_eq!(y2[0], 0.651, epsilon = 1e-12);
        assert_abs_diff_eq!(y2[1], -0.6875, epsilon = 1e-12);
        // u = -y is a fixed point of f
        let y = vec![0.3, -0.7];
        assert_eq!(step(&p, &y, &[-0.3, 0.7]).unwrap(), y);
    }

    #[test]
    fn step_rejects_leaving_the_region() {
        let p = drift();
        assert!(matches!(
            step(&p, &[1.0], &[0.5]),
            Err(Error::InadmissibleTransition { .. })
        ));
    }

    #[test]
    fn face_tolerance_keeps_drift_admissible() {
        let p = drift();
        assert!(p.is_admissible(&[0.5 + 1e-13], &[0.5]));
    }

    #[test]
    fn unknown_problem() {
        assert!(matches!(
            builtin_problem("bogus", &ProblemOverrides::default()),
            Err(Error::UnknownProblem(name)) if name == "bogus"
        ));
    }

    #[test]
    fn invalid_discount_and_initial_state() {
        let bad_alpha = ProblemOverrides { alpha: Some(1.0), y0: None };
        assert!(builtin_problem("shift", &bad_alpha).is_err());
        let bad_y0 = ProblemOverrides { alpha: None, y0: Some(vec![2.0, 0.0]) };
        assert!(builtin_problem("example1", &bad_y0).is_err());
    }

    #[test]
    fn grid_is_lexicographic_with_exact_endpoints() {
        let g = tensor_grid(&[-1.0, 0.0], &[1.0, 1.0], &[3, 2]);
        assert_eq!(
            g,
            vec![
                vec![-1.0, 0.0],
                vec![-1.0, 1.0],
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
        assert_eq!(axis_nodes(-1.0, 1.0, 9)[6], 0.5);
    }

    #[test]
    fn cost_bound_example1() {
        assert_eq!(ex1().cost_bound(9, 9), 2.0);
    }
}
