//! Monomial test functions and the measure-LP constraint coefficients.

use serde::{Deserialize, Serialize};

use crate::model::{DiscreteControlProblem, StateActionPoint};

/// Monomials `y₁^{i₁}⋯y_m^{i_m}` with every `iₖ ≤ max_degree`, so
/// `N = (max_degree + 1)^m`.
///
/// Ordered by total degree, ties in descending lexicographic order of the
/// exponent tuple (`y₁` before `y₂`). The first function is the constant 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialBasis {
    dim: usize,
    max_degree: u32,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(dim: usize, max_degree: u32) -> Self {
        assert!(dim > 0, "basis needs at least one state coordinate");
        let per_axis = max_degree as usize + 1;
        let count = per_axis.pow(dim as u32);
        let mut exponents: Vec<Vec<u32>> = (0..count)
            .map(|mut k| {
                let mut e = vec![0u32; dim];
                for slot in e.iter_mut().rev() {
                    *slot = (k % per_axis) as u32;
                    k /= per_axis;
                }
                e
            })
            .collect();
        exponents.sort_by(|a, b| {
            let (da, db): (u32, u32) = (a.iter().sum(), b.iter().sum());
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        Self { dim, max_degree, exponents }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// `N`
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn evaluate(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(y, &mut BasisScratch::new(self), &mut out);
        out
    }

    /// Allocation-free evaluation for hot loops.
    pub fn evaluate_into(&self, y: &[f64], scratch: &mut BasisScratch, out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim);
        let stride = self.max_degree as usize + 1;
        for (k, &yk) in y.iter().enumerate() {
            let row = &mut scratch.powers[k * stride..(k + 1) * stride];
            row[0] = 1.0;
            for d in 1..stride {
                row[d] = row[d - 1] * yk;
            }
        }
        for (slot, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (k, &ek) in e.iter().enumerate() {
                v *= scratch.powers[k * stride + ek as usize];
            }
            *slot = v;
        }
    }

    /// `Σ coefficients[i]·φᵢ(y)`
    pub fn combine(&self, coefficients: &[f64], y: &[f64]) -> f64 {
        let mut scratch = BasisScratch::new(self);
        let mut values = vec![0.0; self.len()];
        self.evaluate_into(y, &mut scratch, &mut values);
        dot(coefficients, &values)
    }

    /// `α(φᵢ(f(y,u)) − φᵢ(y)) + (1−α)(φᵢ(y₀) − φᵢ(y))` for basis index `i`
    /// (zero-based, so `i = 0` is the constant function).
    pub fn constraint_coefficient(
        &self,
        problem: &DiscreteControlProblem,
        point: &StateActionPoint,
        i: usize,
    ) -> f64 {
        assert!(i < self.len(), "basis index {i} out of range (N = {})", self.len());
        self.constraint_column(problem, point)[i]
    }

    /// All `N` constraint coefficients of one point, with a single dynamics call.
    pub fn constraint_column(&self, problem: &DiscreteControlProblem, point: &StateActionPoint) -> Vec<f64> {
        let mut ctx = CoefficientContext::new(self, problem);
        let mut out = vec![0.0; self.len()];
        ctx.column_into(problem, &point.state, &point.control, &mut out);
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reusable power table for [`MonomialBasis::evaluate_into`].
#[derive(Debug, Clone)]
pub struct BasisScratch {
    powers: Vec<f64>,
}

impl BasisScratch {
    pub fn new(basis: &MonomialBasis) -> Self {
        Self { powers: vec![0.0; basis.dim * (basis.max_degree as usize + 1)] }
    }
}

/// Per-thread state for computing constraint columns: `φ(y₀)` is evaluated
/// once and the buffers are reused.
pub(crate) struct CoefficientContext<'a> {
    basis: &'a MonomialBasis,
    alpha: f64,
    phi_y0: Vec<f64>,
    phi_y: Vec<f64>,
    phi_next: Vec<f64>,
    next: Vec<f64>,
    scratch: BasisScratch,
}

impl<'a> CoefficientContext<'a> {
    pub(crate) fn new(basis: &'a MonomialBasis, problem: &DiscreteControlProblem) -> Self {
        let phi_y0 = basis.evaluate(problem.initial_state());
        Self {
            basis,
            alpha: problem.discount(),
            phi_y0,
            phi_y: vec![0.0; basis.len()],
            phi_next: vec![0.0; basis.len()],
            next: vec![0.0; problem.state_dim()],
            scratch: BasisScratch::new(basis),
        }
    }

    pub(crate) fn column_into(&mut self, problem: &DiscreteControlProblem, y: &[f64], u: &[f64], out: &mut [f64]) {
        problem.dynamics_into(y, u, &mut self.next);
        self.basis.evaluate_into(y, &mut self.scratch, &mut self.phi_y);
        self.basis.evaluate_into(&self.next, &mut self.scratch, &mut self.phi_next);
        let a = self.alpha;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = a * (self.phi_next[i] - self.phi_y[i]) + (1.0 - a) * (self.phi_y0[i] - self.phi_y[i]);
        }
    }
}
