//! Run configuration read from `key = value` text.
//!
//! ```text
//! # Example 1 with a coarser refinement grid
//! problem = example1
//! alpha = 0.9
//! y0 = 0.5, 0.25
//! degree = 7
//! candidate_grid = 33
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::MonomialBasis;
use crate::model::{builtin_problem, DiscreteControlProblem, ProblemOverrides};
use crate::silp::{CandidateSpec, GridSpec};
use crate::synthesis::{Horizon, RolloutSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Minimizer,
    Heuristic,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimizer" => Ok(Self::Minimizer),
            "heuristic" => Ok(Self::Heuristic),
            other => Err(Error::Config(format!("unknown policy `{other}` (expected minimizer or heuristic)"))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Minimizer => "minimizer",
            Self::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: String,
    pub alpha: Option<f64>,
    pub y0: Option<Vec<f64>>,
    /// Per-coordinate monomial degree `𝓘`.
    pub degree: u32,
    /// Base LP grid, nodes per axis.
    pub state_grid: usize,
    pub control_grid: usize,
    /// Refinement candidate grid, nodes per axis.
    pub candidate_grid: usize,
    pub candidate_control_grid: usize,
    /// Local stencil half-width around atoms in base cells; 0 disables it.
    pub local_cells: f64,
    pub batch: usize,
    pub max_rounds: usize,
    /// Dual-feasibility tolerance of the refinement loop.
    pub tol: f64,
    /// Control grid of the minimizer policy, nodes per axis.
    pub policy_grid: usize,
    pub policy: PolicyKind,
    /// Truncation tolerance; ignored when `steps` is set.
    pub epsilon: Option<f64>,
    pub steps: Option<usize>,
    pub discard: f64,
    /// Value-iteration oracle grid.
    pub oracle_state_grid: usize,
    pub oracle_control_grid: usize,
    pub oracle_tol: f64,
    /// Slack for the optimality-condition residuals.
    pub kappa_tol: f64,
    /// Allowed `|V(y₀) − μ/(1−α)|` for the rollout and the oracle.
    pub gap_tol: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "example1".into(),
            alpha: None,
            y0: None,
            degree: 7,
            state_grid: 9,
            control_grid: 9,
            candidate_grid: 33,
            candidate_control_grid: 9,
            local_cells: 1.0,
            batch: 8,
            max_rounds: 500,
            tol: 1e-6,
            policy_grid: 21,
            policy: PolicyKind::Heuristic,
            epsilon: None,
            steps: None,
            discard: 1e-2,
            oracle_state_grid: 41,
            oracle_control_grid: 21,
            oracle_tol: 1e-6,
            kappa_tol: 0.15,
            gap_tol: 0.35,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "problem" => self.problem = v.to_string(),
            "alpha" => self.alpha = Some(parse_num(key, v)?),
            "y0" => self.y0 = Some(parse_list(key, v)?),
            "degree" => self.degree = parse_num(key, v)?,
            "state_grid" => self.state_grid = parse_num(key, v)?,
            "control_grid" => self.control_grid = parse_num(key, v)?,
            "candidate_grid" => self.candidate_grid = parse_num(key, v)?,
            "candidate_control_grid" => self.candidate_control_grid = parse_num(key, v)?,
            "local_cells" => self.local_cells = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "max_rounds" => self.max_rounds = parse_num(key, v)?,
            "tol" => self.tol = parse_num(key, v)?,
            "policy_grid" => self.policy_grid = parse_num(key, v)?,
            "policy" => self.policy = v.parse()?,
            "epsilon" => self.epsilon = Some(parse_num(key, v)?),
            "steps" => self.steps = Some(parse_num(key, v)?),
            "discard" => self.discard = parse_num(key, v)?,
            "oracle_state_grid" => self.oracle_state_grid = parse_num(key, v)?,
            "oracle_control_grid" => self.oracle_control_grid = parse_num(key, v)?,
            "oracle_tol" => self.oracle_tol = parse_num(key, v)?,
            "kappa_tol" => self.kappa_tol = parse_num(key, v)?,
            "gap_tol" => self.gap_tol = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("oracle_tol", self.oracle_tol),
            ("kappa_tol", self.kappa_tol),
            ("gap_tol", self.gap_tol),
            ("epsilon", self.epsilon.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("`{name}` must be positive, got {v}")));
            }
        }
        let grids = [
            ("state_grid", self.state_grid),
            ("control_grid", self.control_grid),
            ("candidate_grid", self.candidate_grid),
            ("candidate_control_grid", self.candidate_control_grid),
            ("policy_grid", self.policy_grid),
            ("oracle_state_grid", self.oracle_state_grid),
            ("oracle_control_grid", self.oracle_control_grid),
        ];
        for (name, n) in grids {
            if n < 2 {
                return Err(Error::Config(format!("`{name}` must be at least 2, got {n}")));
            }
        }
        if self.steps == Some(0) {
            return Err(Error::Config("`steps` must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.discard) {
            return Err(Error::Config(format!("`discard` must lie in [0, 1), got {}", self.discard)));
        }
        if !(self.local_cells >= 0.0) {
            return Err(Error::Config("`local_cells` must be nonnegative".into()));
        }
        if self.batch == 0 || self.max_rounds == 0 {
            return Err(Error::Config("`batch` and `max_rounds` must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<DiscreteControlProblem> {
        builtin_problem(&self.problem, &ProblemOverrides { alpha: self.alpha, y0: self.y0.clone() })
    }

    pub fn basis(&self, problem: &DiscreteControlProblem) -> MonomialBasis {
        MonomialBasis::new(problem.state_dim(), self.degree)
    }

    pub fn base_grid(&self) -> GridSpec {
        GridSpec::new(self.state_grid, self.control_grid)
    }

    pub fn candidates(&self, problem: &DiscreteControlProblem) -> CandidateSpec {
        let cell = problem.state_region().cell_width(self.state_grid);
        let radius = cell.iter().copied().fold(f64::INFINITY, f64::min) * self.local_cells;
        CandidateSpec {
            grid: GridSpec::new(self.candidate_grid, self.candidate_control_grid),
            batch: self.batch,
            local_radius: (radius > 0.0).then_some(radius),
        }
    }

    pub fn rollout_spec(&self, problem: &DiscreteControlProblem) -> RolloutSpec {
        match (self.steps, self.epsilon) {
            (Some(t), _) => RolloutSpec::new(problem, Horizon::Fixed(t)),
            (None, Some(eps)) => RolloutSpec::new(problem, Horizon::Epsilon(eps)),
            (None, None) => RolloutSpec::default_epsilon(problem),
        }
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg: RunConfig = "problem = shift\nalpha=0.5 # discount\n\ny0 = 0.4\nsteps = 20\npolicy = minimizer\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.problem, "shift");
        assert_eq!(cfg.alpha, Some(0.5));
        assert_eq!(cfg.y0, Some(vec![0.4]));
        assert_eq!(cfg.steps, Some(20));
        assert_eq!(cfg.policy, PolicyKind::Minimizer);
        let p = cfg.build_problem().unwrap();
        assert_eq!(p.initial_state(), &[0.4]);
    }

    #[test]
    fn lists_accept_commas_and_spaces() {
        let cfg: RunConfig = "y0 = 0.5, 0.25".parse().unwrap();
        assert_eq!(cfg.y0, Some(vec![0.5, 0.25]));
        let cfg: RunConfig = "y0 = 0.5 0.25".parse().unwrap();
        assert_eq!(cfg.y0, Some(vec![0.5, 0.25]));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "tol = 0",
            "state_grid = 1",
            "steps = 0",
            "discard = 1.5",
            "bogus = 3",
            "degree = -1",
            "policy = greedy",
            "just a line",
        ] {
            assert!(matches!(text.parse::<RunConfig>(), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn local_radius_in_base_cells() {
        let cfg = RunConfig { local_cells: 0.5, ..RunConfig::default() };
        let p = cfg.build_problem().unwrap();
        // base 9 nodes on [-1, 1] => cell 0.25
        assert_eq!(cfg.candidates(&p).local_radius, Some(0.125));
        assert_eq!(RunConfig::default().candidates(&p).local_radius, Some(0.25));
        let off = RunConfig { local_cells: 0.0, ..RunConfig::default() };
        assert_eq!(off.candidates(&p).local_radius, None);
    }
}
