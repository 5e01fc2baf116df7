//! Dense revised simplex for `min cᵀx, Ax = b, x ≥ 0` with `b ≥ 0`.
//!
//! The basis inverse is kept explicitly (the LPs here have at most a few
//! hundred rows) and updated in product form, with a fresh Gauss-Jordan
//! inverse every `refactor_interval` pivots. Phase one uses one artificial
//! variable per row. Pricing is Dantzig's rule until `degeneracy_limit`
//! consecutive pivots make no objective progress, then Bland's rule until
//! progress resumes.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub optimality_tol: f64,
    pub feasibility_tol: f64,
    pub degeneracy_limit: usize,
    pub max_pivots: usize,
    pub refactor_interval: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            optimality_tol: 1e-10,
            feasibility_tol: 1e-9,
            degeneracy_limit: 1000,
            max_pivots: 2_000_000,
            refactor_interval: 64,
        }
    }
}

/// Column-major constraint data borrowed from the caller.
#[derive(Debug, Clone, Copy)]
pub struct DenseProblem<'a> {
    pub rows: usize,
    pub cols: usize,
    pub matrix: &'a [f64],
    pub rhs: &'a [f64],
    pub cost: &'a [f64],
}

impl DenseProblem<'_> {
    fn column(&self, j: usize) -> &[f64] {
        &self.matrix[j * self.rows..(j + 1) * self.rows]
    }
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    /// Basic variable per row; indices `>= cols` are artificial.
    pub basis: Vec<usize>,
    pub values: Vec<f64>,
    /// Simplex multipliers `π = c_Bᵀ B⁻¹`.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexFailure {
    Infeasible(f64),
    Unbounded,
    Stalled(usize),
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

struct State<'a> {
    lp: DenseProblem<'a>,
    opts: SimplexOptions,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

pub fn solve(
    lp: DenseProblem<'_>,
    warm_basis: Option<&[usize]>,
    opts: SimplexOptions,
) -> Result<SimplexOutcome, SimplexFailure> {
    assert_eq!(lp.matrix.len(), lp.rows * lp.cols);
    assert_eq!(lp.rhs.len(), lp.rows);
    assert_eq!(lp.cost.len(), lp.cols);
    assert!(lp.rhs.iter().all(|&b| b >= 0.0), "right-hand side must be nonnegative");

    let mut st = warm_basis
        .and_then(|b| State::warm(lp, opts, b))
        .unwrap_or_else(|| State::cold(lp, opts));

    if st.artificial_mass() > opts.feasibility_tol {
        st.run(Phase::One)?;
        let residual = st.artificial_mass();
        if residual > 1e3 * opts.feasibility_tol {
            return Err(SimplexFailure::Infeasible(residual));
        }
    }
    st.drive_out_artificials();
    st.run(Phase::Two)?;
    st.refactor();
    Ok(st.outcome())
}

impl<'a> State<'a> {
    fn cold(lp: DenseProblem<'a>, opts: SimplexOptions) -> Self {
        let m = lp.rows;
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut in_basis = vec![false; lp.cols + m];
        let basis: Vec<usize> = (0..m).map(|i| lp.cols + i).collect();
        for &v in &basis {
            in_basis[v] = true;
        }
        Self {
            lp,
            opts,
            basis,
            in_basis,
            binv,
            xb: lp.rhs.to_vec(),
            pivots: 0,
            since_refactor: 0,
        }
    }

    /// Starts from a previously optimal basis if it is still valid and feasible.
    fn warm(lp: DenseProblem<'a>, opts: SimplexOptions, basis: &[usize]) -> Option<Self> {
        let m = lp.rows;
        if basis.len() != m {
            return None;
        }
        let mut in_basis = vec![false; lp.cols + m];
        for &v in basis {
            if v >= lp.cols + m || in_basis[v] {
                return None;
            }
            in_basis[v] = true;
        }
        let mut st = Self {
            lp,
            opts,
            basis: basis.to_vec(),
            in_basis,
            binv: vec![0.0; m * m],
            xb: vec![0.0; m],
            pivots: 0,
            since_refactor: 0,
        };
        if !st.try_refactor() || st.xb.iter().any(|&x| x < -opts.feasibility_tol) {
            return None;
        }
        Some(st)
    }

    fn is_artificial(&self, v: usize) -> bool {
        v >= self.lp.cols
    }

    fn column_of(&self, v: usize, out: &mut [f64]) {
        if self.is_artificial(v) {
            out.fill(0.0);
            out[v - self.lp.cols] = 1.0;
        } else {
            out.copy_from_slice(self.lp.column(v));
        }
    }

    fn artificial_mass(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(&v, _)| self.is_artificial(v))
            .map(|(_, &x)| x.max(0.0))
            .sum()
    }

    fn refactor(&mut self) {
        // A basis reached by pivoting is nonsingular in exact arithmetic; if
        // rounding says otherwise keep the product-form inverse.
        let _ = self.try_refactor();
    }

    fn try_refactor(&mut self) -> bool {
        let m = self.lp.rows;
        // augmented [B | I], Gauss-Jordan with partial pivoting
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        let mut col = vec![0.0; m];
        for (k, &v) in self.basis.iter().enumerate() {
            self.column_of(v, &mut col);
            for i in 0..m {
                aug[i * w + k] = col[i];
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        for k in 0..m {
            let (p, best) = (k..m)
                .map(|i| (i, aug[i * w + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-13 {
                return false;
            }
            if p != k {
                for j in 0..w {
                    aug.swap(k * w + j, p * w + j);
                }
            }
            let piv = aug[k * w + k];
            for j in 0..w {
                aug[k * w + j] /= piv;
            }
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = aug[i * w + k];
                if f != 0.0 {
                    for j in 0..w {
                        aug[i * w + j] -= f * aug[k * w + j];
                    }
                }
            }
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&aug[i * w + m..(i + 1) * w]);
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let x: f64 = row.iter().zip(self.lp.rhs).map(|(a, b)| a * b).sum();
            self.xb[i] = if x.abs() < 1e-13 { 0.0 } else { x };
        }
        self.since_refactor = 0;
        true
    }

    fn phase_cost(&self, phase: Phase, v: usize) -> f64 {
        match (phase, self.is_artificial(v)) {
            (Phase::One, true) => 1.0,
            (Phase::One, false) => 0.0,
            (Phase::Two, true) => 0.0,
            (Phase::Two, false) => self.lp.cost[v],
        }
    }

    fn multipliers(&self, phase: Phase) -> Vec<f64> {
        let m = self.lp.rows;
        let mut pi = vec![0.0; m];
        for (i, &v) in self.basis.iter().enumerate() {
            let c = self.phase_cost(phase, v);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (p, r) in pi.iter_mut().zip(row) {
                    *p += c * r;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, phase: Phase, pi: &[f64], j: usize) -> f64 {
        let col = self.lp.column(j);
        self.phase_cost(phase, j) - col.iter().zip(pi).map(|(a, p)| a * p).sum::<f64>()
    }

    /// Entering structural column, or `None` at optimality.
    fn price(&self, phase: Phase, pi: &[f64], bland: bool) -> Option<(usize, f64)> {
        let tol = self.opts.optimality_tol;
        let candidates = (0..self.lp.cols)
            .into_par_iter()
            .filter(|&j| !self.in_basis[j])
            .map(|j| (j, self.reduced_cost(phase, pi, j)))
            .filter(|&(_, d)| d < -tol);
        if bland {
            candidates.min_by_key(|&(j, _)| j)
        } else {
            candidates.reduce_with(|a, b| match a.1.total_cmp(&b.1) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            })
        }
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.lp.rows;
        (0..m)
            .map(|i| self.binv[i * m..(i + 1) * m].iter().zip(col).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Leaving row by minimum ratio; ties go to the smallest basic variable.
    /// Artificials still basic in phase two must stay at zero, so any nonzero
    /// direction entry forces them out.
    fn ratio_test(&self, phase: Phase, w: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.pivot_tol;
        let mut best: Option<(usize, f64)> = None;
        for (i, &wi) in w.iter().enumerate() {
            let ratio = if phase == Phase::Two && self.is_artificial(self.basis[i]) {
                if wi.abs() > tol {
                    0.0
                } else {
                    continue;
                }
            } else if wi > tol {
                self.xb[i].max(0.0) / wi
            } else {
                continue;
            };
            best = match best {
                None => Some((i, ratio)),
                Some((r, t)) => {
                    if ratio < t - 1e-14 || (ratio <= t + 1e-14 && self.basis[i] < self.basis[r]) {
                        Some((i, ratio))
                    } else {
                        Some((r, t))
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, row: usize, entering: usize, w: &[f64], theta: f64) {
        let m = self.lp.rows;
        for i in 0..m {
            if i != row {
                self.xb[i] -= theta * w[i];
                if self.xb[i].abs() < 1e-14 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[row] = theta;
        let piv = w[row];
        let (before, rest) = self.binv.split_at_mut(row * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (i, chunk) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let idx = if i < row { i } else { i + 1 };
            let f = w[idx];
            if f != 0.0 {
                for (a, b) in chunk.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
            }
        }
        let leaving = self.basis[row];
        self.in_basis[leaving] = false;
        self.in_basis[entering] = true;
        self.basis[row] = entering;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_interval {
            self.refactor();
        }
    }

    fn run(&mut self, phase: Phase) -> Result<(), SimplexFailure> {
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(SimplexFailure::Stalled(self.pivots));
            }
            let pi = self.multipliers(phase);
            let Some((q, dq)) = self.price(phase, &pi, bland) else {
                return Ok(());
            };
            let w = self.ftran(self.lp.column(q));
            let Some((r, theta)) = self.ratio_test(phase, &w) else {
                return Err(SimplexFailure::Unbounded);
            };
            self.pivot(r, q, &w, theta);
            if theta * (-dq) <= 1e-13 {
                stall += 1;
                if stall >= self.opts.degeneracy_limit && !bland {
                    log::debug!("switching to Bland's rule after {stall} degenerate pivots");
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural
    /// column can replace them. Rows where none can are redundant.
    fn drive_out_artificials(&mut self) {
        let m = self.lp.rows;
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            let best = (0..self.lp.cols)
                .filter(|&j| !self.in_basis[j])
                .map(|j| (j, self.lp.column(j).iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>().abs()))
                .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                    Some(a) if a.1 >= x.1 => Some(a),
                    _ => Some(x),
                });
            if let Some((j, mag)) = best {
                if mag > 1e-7 {
                    let w = self.ftran(self.lp.column(j));
                    self.pivot(r, j, &w, self.xb[r].max(0.0) / w[r]);
                }
            }
        }
        self.refactor();
    }

    fn outcome(&self) -> SimplexOutcome {
        let duals = self.multipliers(Phase::Two);
        let objective = self
            .basis
            .iter()
            .zip(&self.xb)
            .map(|(&v, &x)| self.phase_cost(Phase::Two, v) * x)
            .sum();
        SimplexOutcome {
            basis: self.basis.clone(),
            values: self.xb.clone(),
            duals,
            objective,
            pivots: self.pivots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn run(rows: usize, cols: &[&[f64]], rhs: &[f64], cost: &[f64]) -> Result<SimplexOutcome, SimplexFailure> {
        let matrix: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        let lp = DenseProblem { rows, cols: cols.len(), matrix: &matrix, rhs, cost };
        solve(lp, None, SimplexOptions::default())
    }

    fn primal(out: &SimplexOutcome, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (&v, &val) in out.basis.iter().zip(&out.values) {
            if v < n {
                x[v] = val;
            }
        }
        x
    }

    #[test]
    fn small_lp() {
        // min -x1 - 2x2 s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6
        let out = run(
            2,
            &[&[1.0, 1.0], &[1.0, 3.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[4.0, 6.0],
            &[-1.0, -2.0, 0.0, 0.0],
        )
        .unwrap();
        let x = primal(&out, 4);
        assert_abs_diff_eq!(out.objective, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
        // strong duality: πᵀb = objective
        let dual_obj = out.duals[0] * 4.0 + out.duals[1] * 6.0;
        assert_abs_diff_eq!(dual_obj, -5.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible() {
        // x1 = 1 and x1 = 2
        let r = run(2, &[&[1.0, 1.0]], &[1.0, 2.0], &[0.0]);
        assert!(matches!(r, Err(SimplexFailure::Infeasible(_))));
    }

    #[test]
    fn unbounded() {
        // min -x1 s.t. x1 - x2 = 0
        let r = run(1, &[&[1.0], &[-1.0]], &[0.0], &[-1.0, 0.0]);
        assert_eq!(r.unwrap_err(), SimplexFailure::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // identical rows x1 + x2 = 1 twice
        let out = run(2, &[&[1.0, 1.0], &[1.0, 1.0]], &[1.0, 1.0], &[2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(out.objective, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn warm_start_resumes() {
        let cols: Vec<&[f64]> = vec![&[1.0, 1.0], &[1.0, 3.0], &[1.0, 0.0], &[0.0, 1.0]];
        let matrix: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        let cost = [-1.0, -2.0, 0.0, 0.0];
        let lp = DenseProblem { rows: 2, cols: 4, matrix: &matrix, rhs: &[4.0, 6.0], cost: &cost };
        let cold = solve(lp, None, SimplexOptions::default()).unwrap();
        let warm = solve(lp, Some(&cold.basis), SimplexOptions::default()).unwrap();
        assert_eq!(warm.pivots, 0);
        assert_abs_diff_eq!(warm.objective, cold.objective, epsilon = 1e-14);
        // a bogus hint falls back to a cold start
        let bogus = solve(lp, Some(&[0, 0]), SimplexOptions::default()).unwrap();
        assert_abs_diff_eq!(bogus.objective, -5.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example in equality form with slacks.
        let cols: Vec<&[f64]> = vec![
            &[0.25, 0.5, 0.0],
            &[-60.0, -90.0, 0.0],
            &[-0.04, -0.02, 1.0],
            &[9.0, 3.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0],
        ];
        let out = run(3, &cols, &[0.0, 0.0, 1.0], &[-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(out.objective, -0.05, epsilon = 1e-12);
    }
}
