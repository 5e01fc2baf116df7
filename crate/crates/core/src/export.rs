//! File formats: solution JSON, trajectory CSV and SVG plot data.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{DiscreteControlProblem, StateActionPoint};
use crate::silp::{Atom, AtomicMeasure, DualCertificate, RefinedSolution};
use crate::synthesis::Rollout;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub beta: f64,
}

/// Serialized output of a refined solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub problem: String,
    pub alpha: f64,
    pub y0: Vec<f64>,
    pub degree: u32,
    pub atoms: Vec<AtomRecord>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    /// Primal value `Σ βⱼ g(yⱼ, uⱼ)`.
    pub value: f64,
    /// `μ / (1−α)`, the lower bound on `V(y₀)`.
    pub lower_bound: f64,
    pub rounds: usize,
    pub max_dual_violation: f64,
    pub columns: usize,
    pub history: Vec<f64>,
}

impl SolutionFile {
    pub fn new(problem: &DiscreteControlProblem, degree: u32, refined: &RefinedSolution) -> Self {
        let s = &refined.solution;
        let alpha = problem.discount();
        Self {
            problem: problem.name().to_string(),
            alpha,
            y0: problem.initial_state().to_vec(),
            degree,
            atoms: s
                .measure
                .atoms
                .iter()
                .map(|a| AtomRecord { y: a.point.state.clone(), u: a.point.control.clone(), beta: a.weight })
                .collect(),
            lambda: s.certificate.lambda.clone(),
            mu: s.certificate.mu,
            value: s.value,
            lower_bound: s.certificate.mu / (1.0 - alpha),
            rounds: refined.rounds,
            max_dual_violation: refined.max_dual_violation,
            columns: refined.lp.columns(),
            history: refined.history.clone(),
        }
    }

    pub fn measure(&self) -> AtomicMeasure {
        AtomicMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { point: StateActionPoint::new(a.y.clone(), a.u.clone()), weight: a.beta })
                .collect(),
        }
    }

    pub fn certificate(&self) -> DualCertificate {
        DualCertificate { lambda: self.lambda.clone(), mu: self.mu }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `%g`-style formatting with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Header `t,y1,…,ym,u1,…,ud`, one row per step, and `#` footer lines.
pub fn trajectory_csv(rollout: &Rollout, state_dim: usize, control_dim: usize, footer: &[(&str, f64)]) -> String {
    let mut out = String::from("t");
    for i in 1..=state_dim {
        write!(out, ",y{i}").unwrap();
    }
    for i in 1..=control_dim {
        write!(out, ",u{i}").unwrap();
    }
    out.push('\n');
    for s in &rollout.steps {
        write!(out, "{}", s.t).unwrap();
        for v in s.state.iter().chain(&s.control) {
            write!(out, ",{}", sig6(*v)).unwrap();
        }
        out.push('\n');
    }
    for (name, value) in footer {
        writeln!(out, "# {name}={}", sig6(*value)).unwrap();
    }
    out
}

const SVG_SIZE: f64 = 400.0;
const SVG_MARGIN: f64 = 20.0;

/// State trajectory as a polyline with atoms drawn as circles whose radius is
/// proportional to their weight. One-dimensional states are plotted against
/// `t`.
pub fn trajectory_svg(problem: &DiscreteControlProblem, rollout: &Rollout, measure: &AtomicMeasure) -> String {
    let region = problem.state_region();
    let horizon = rollout.final_time().unwrap_or(0).max(1) as f64;
    let planar = problem.state_dim() >= 2;
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let scale = |v: f64, lo: f64, hi: f64| SVG_MARGIN + (v - lo) / (hi - lo) * span;
    let project = |t: f64, y: &[f64]| -> (f64, f64) {
        if planar {
            (
                scale(y[0], region.lower[0], region.upper[0]),
                SVG_SIZE - scale(y[1], region.lower[1], region.upper[1]),
            )
        } else {
            (scale(t, 0.0, horizon), SVG_SIZE - scale(y[0], region.lower[0], region.upper[0]))
        }
    };
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">"
    )
    .unwrap();
    writeln!(
        out,
        "<rect x=\"{m}\" y=\"{m}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"#999\"/>",
        m = SVG_MARGIN
    )
    .unwrap();
    let points: Vec<String> = rollout
        .steps
        .iter()
        .map(|s| {
            let (x, y) = project(s.t as f64, &s.state);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    writeln!(out, "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"{}\"/>", points.join(" ")).unwrap();
    if planar {
        for a in &measure.atoms {
            let (x, y) = project(0.0, &a.point.state);
            writeln!(
                out,
                "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"{:.3}\" fill=\"#d62728\" fill-opacity=\"0.5\"/>",
                40.0 * a.weight
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::RolloutStep;

    #[test]
    fn sig6_matches_printf_g() {
        let cases = [
            (0.5, "0.5"),
            (-1.0, "-1"),
            (0.123456789, "0.123457"),
            (-9.97212345, "-9.97212"),
            (1234567.0, "1.23457e+06"),
            (0.0000123456, "1.23456e-05"),
            (0.0001, "0.0001"),
            (999999.7, "1e+06"),
            (100000.0, "100000"),
            (0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(sig6(x), want, "{x}");
        }
    }

    fn sample_rollout() -> Rollout {
        Rollout {
            discount: 0.9,
            steps: vec![
                RolloutStep { t: 0, state: vec![0.5, 0.25], control: vec![-1.0, 1.0] },
                RolloutStep { t: 1, state: vec![0.75, -0.375], control: vec![1.0, 1.0] },
            ],
            truncated_value: -1.0,
            truncation_bound: 0.5,
            gap: None,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = trajectory_csv(&sample_rollout(), 2, 2, &[("value", -9.972)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,y1,y2,u1,u2");
        assert_eq!(lines[1], "0,0.5,0.25,-1,1");
        assert_eq!(lines[2], "1,0.75,-0.375,1,1");
        assert_eq!(lines[3], "# value=-9.972");
    }

    #[test]
    fn solution_round_trip() {
        let file = SolutionFile {
            problem: "shift".into(),
            alpha: 0.5,
            y0: vec![0.4],
            degree: 1,
            atoms: vec![AtomRecord { y: vec![0.4], u: vec![0.0], beta: 0.5 }],
            lambda: vec![0.0, 1.0],
            mu: 0.2,
            value: 0.2,
            lower_bound: 0.4,
            rounds: 1,
            max_dual_violation: 0.0,
            columns: 121,
            history: vec![0.2],
        };
        let text = file.to_json().unwrap();
        for key in ["\"atoms\"", "\"lambda\"", "\"mu\"", "\"value\"", "\"rounds\"", "\"max_dual_violation\""] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(SolutionFile::from_json(&text).unwrap(), file);
        assert!(SolutionFile::from_json("{\"atoms\": [").is_err());
        assert_eq!(file.certificate().lambda, vec![0.0, 1.0]);
        assert_eq!(file.measure().atoms[0].weight, 0.5);
    }

    #[test]
    fn svg_has_polyline_and_scaled_circles() {
        let p = crate::model::builtin_problem("example1", &Default::default()).unwrap();
        let measure = AtomicMeasure {
            atoms: vec![
                Atom { point: StateActionPoint::new(vec![0.5, 0.25], vec![-1.0, 1.0]), weight: 0.25 },
                Atom { point: StateActionPoint::new(vec![0.0, 0.0], vec![1.0, 1.0]), weight: 0.75 },
            ],
        };
        let svg = trajectory_svg(&p, &sample_rollout(), &measure);
        assert!(svg.contains("<polyline"));
        // y = (0.5, 0.25) maps to (20 + 0.75·360, 400 − (20 + 0.625·360))
        assert!(svg.contains("290.000,155.000"));
        assert!(svg.contains("r=\"10.000\""));
        assert!(svg.contains("r=\"30.000\""));
    }
}
