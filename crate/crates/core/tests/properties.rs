use occlp::basis::MonomialBasis;
use occlp::export::sig6;
use occlp::model::{builtin_problem, ProblemOverrides, StateActionPoint};
use occlp::silp::simplex::{self, DenseProblem, SimplexOptions};
use occlp::silp::{discard_small_atoms, Atom, AtomicMeasure};
use occlp::synthesis::{heuristic_control, rollout, Horizon, RolloutSpec};
use occlp::verify::{measure_residuals, occupational_measure, trajectory_residual_bound};
use occlp::{DiscreteControlProblem, Result};
use proptest::prelude::*;

fn example1() -> DiscreteControlProblem {
    builtin_problem("example1", &ProblemOverrides::default()).unwrap()
}

fn unit() -> impl Strategy<Value = f64> {
    -1.0f64..=1.0
}

/// Best objective over all basic solutions of a two-row standard-form LP.
fn brute_force(a: &[[f64; 2]], b: [f64; 2], c: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |obj: f64| best = Some(best.map_or(obj, |v: f64| v.min(obj)));
    for j in 0..a.len() {
        // single column: a_j x = b
        let x = if a[j][0].abs() > 1e-12 { b[0] / a[j][0] } else if a[j][1].abs() > 1e-12 { b[1] / a[j][1] } else { continue };
        if x >= -1e-12 && (a[j][0] * x - b[0]).abs() < 1e-9 && (a[j][1] * x - b[1]).abs() < 1e-9 {
            consider(c[j] * x);
        }
        for k in j + 1..a.len() {
            let det = a[j][0] * a[k][1] - a[k][0] * a[j][1];
            if det.abs() < 1e-9 {
                continue;
            }
            let xj = (b[0] * a[k][1] - a[k][0] * b[1]) / det;
            let xk = (a[j][0] * b[1] - b[0] * a[j][1]) / det;
            if xj >= -1e-12 && xk >= -1e-12 {
                consider(c[j] * xj + c[k] * xk);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_size_and_grading(dim in 1usize..4, degree in 0u32..5) {
        let b = MonomialBasis::new(dim, degree);
        prop_assert_eq!(b.len(), (degree as usize + 1).pow(dim as u32));
        prop_assert!(b.exponents()[0].iter().all(|&e| e == 0));
        let totals: Vec<u32> = b.exponents().iter().map(|e| e.iter().sum()).collect();
        prop_assert!(totals.windows(2).all(|w| w[0] <= w[1]));
        let mut unique = b.exponents().to_vec();
        unique.sort();
        unique.dedup();
        prop_assert_eq!(unique.len(), b.len());
    }

    #[test]
    fn fixed_points_have_zero_columns(y1 in unit(), y2 in unit()) {
        // f(y, -y) = y for example1, so at y = y₀ every coefficient vanishes
        let p = builtin_problem("example1", &ProblemOverrides { alpha: None, y0: Some(vec![y1, y2]) }).unwrap();
        let b = MonomialBasis::new(2, 4);
        let col = b.constraint_column(&p, &StateActionPoint::new(vec![y1, y2], vec![-y1, -y2]));
        prop_assert!(col.iter().all(|&c| c.abs() <= 1e-15));
    }

    #[test]
    fn constant_coefficient_is_zero(y in (unit(), unit()), u in (unit(), unit())) {
        let p = example1();
        let b = MonomialBasis::new(2, 3);
        let pt = StateActionPoint::new(vec![y.0, y.1], vec![u.0, u.1]);
        prop_assert_eq!(b.constraint_coefficient(&p, &pt, 0), 0.0);
    }

    #[test]
    fn rollout_measure_identities(controls in prop::collection::vec((unit(), unit()), 1..60)) {
        let p = example1();
        let b = MonomialBasis::new(2, 3);
        let t = controls.len() - 1;
        let clock = std::cell::Cell::new(0usize);
        let scripted = |_: &DiscreteControlProblem, _: &[f64]| -> Result<Vec<f64>> {
            let (a, c) = controls[clock.get()];
            clock.set(clock.get() + 1);
            Ok(vec![a, c])
        };
        let r = rollout(&p, &scripted, &RolloutSpec::new(&p, Horizon::Fixed(t))).unwrap();
        let m = occupational_measure(&r).unwrap();
        let alpha = p.discount();
        let expected = 1.0 - alpha.powi(t as i32 + 1);
        prop_assert!((m.total_weight() - expected).abs() <= 1e-12);
        // two-sided evaluation on every basis function
        for i in 0..b.len() {
            let lhs: f64 = m.atoms.iter().map(|a| a.weight * b.evaluate(&a.point.state)[i]).sum();
            let rhs: f64 = (1.0 - alpha) * r.steps.iter().map(|s| alpha.powi(s.t as i32) * b.evaluate(&s.state)[i]).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
        let res = measure_residuals(&m.atoms, &b, &p);
        let worst = res.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        prop_assert!(worst <= trajectory_residual_bound(&r, &b, &p) + 1e-15);
        // Horner and forward sums agree
        prop_assert!((r.horner_value(&p) - r.truncated_value).abs() <= 1e-12);
    }

    #[test]
    fn heuristic_returns_an_atom_control(
        atoms in prop::collection::vec(((unit(), unit()), (unit(), unit()), 0.01f64..1.0), 1..12),
        y in (unit(), unit()),
    ) {
        let measure = AtomicMeasure {
            atoms: atoms
                .iter()
                .map(|&((a, b), (c, d), w)| Atom { point: StateActionPoint::new(vec![a, b], vec![c, d]), weight: w })
                .collect(),
        };
        match heuristic_control(&measure, &[y.0, y.1]) {
            Ok(u) => {
                let dist = |s: &[f64]| ((s[0] - y.0).powi(2) + (s[1] - y.1).powi(2)).sqrt();
                let nearest = measure.atoms.iter().map(|a| dist(&a.point.state)).fold(f64::INFINITY, f64::min);
                prop_assert!(measure
                    .atoms
                    .iter()
                    .any(|a| a.point.control == u && dist(&a.point.state) <= nearest + 1e-12));
            }
            Err(occlp::Error::AssumptionIIViolation { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn discard_renormalizes(weights in prop::collection::vec(0.001f64..1.0, 1..20), threshold in 0.0f64..0.2) {
        let total: f64 = weights.iter().sum();
        let measure = AtomicMeasure {
            atoms: weights
                .iter()
                .enumerate()
                .map(|(i, w)| Atom { point: StateActionPoint::new(vec![i as f64], vec![0.0]), weight: w / total })
                .collect(),
        };
        match discard_small_atoms(&measure, threshold) {
            Ok(kept) => {
                prop_assert!((kept.total_weight() - 1.0).abs() <= 1e-12);
                prop_assert!(kept.len() <= measure.len());
            }
            Err(occlp::Error::EmptyMeasure) => {
                prop_assert!(measure.atoms.iter().all(|a| a.weight < threshold));
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn sig6_round_trips(x in -1e8f64..1e8) {
        let back: f64 = sig6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs() + 1e-300);
    }

    #[test]
    fn simplex_matches_vertex_enumeration(
        cols in prop::collection::vec((-2.0f64..2.0, 0.1f64..2.0, -3.0f64..3.0), 2..9),
        b0 in 0.0f64..1.0,
    ) {
        // a positive second row bounds the feasible set
        let a: Vec<[f64; 2]> = cols.iter().map(|&(r0, r1, _)| [r0, r1]).collect();
        let c: Vec<f64> = cols.iter().map(|&(_, _, c)| c).collect();
        let b = [b0, 1.0];
        let matrix: Vec<f64> = a.iter().flat_map(|r| r.iter().copied()).collect();
        let lp = DenseProblem { rows: 2, cols: a.len(), matrix: &matrix, rhs: &b, cost: &c };
        let expected = brute_force(&a, b, &c);
        match (simplex::solve(lp, None, SimplexOptions::default()), expected) {
            (Ok(out), Some(best)) => {
                prop_assert!((out.objective - best).abs() <= 1e-8, "{} vs {}", out.objective, best);
                // weak and strong duality
                let dual_obj: f64 = out.duals.iter().zip(&b).map(|(y, r)| y * r).sum();
                prop_assert!((dual_obj - out.objective).abs() <= 1e-8);
            }
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "simplex {:?} vs enumeration {:?}", got.map(|o| o.objective), want),
        }
    }
}
