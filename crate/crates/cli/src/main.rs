//! `occlp`: solve the measure LP, roll out a feedback policy and verify the
//! result. All outputs go to the `--out` directory.

mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use occlp::config::PolicyKind;
use occlp::RunConfig;

#[derive(Parser)]
#[command(name = "occlp", version, about = "Occupational-measure LP solver for discounted optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the refined LP and write solution.json and summary.txt
    Solve(Options),
    /// Roll out a policy from solution.json and write trajectory.csv and trajectory.svg
    Rollout(Options),
    /// Check solution.json against the oracle and write report.txt
    Verify(Options),
    /// Solve, roll out and verify
    Run(Options),
}

#[derive(Args, Debug, Default)]
struct Options {
    /// key = value configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Initial state, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
    /// Per-coordinate monomial degree
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    state_grid: Option<usize>,
    #[arg(long)]
    control_grid: Option<usize>,
    #[arg(long)]
    candidate_grid: Option<usize>,
    /// Dual-feasibility tolerance of the refinement
    #[arg(long)]
    tol: Option<f64>,
    /// Rollout truncation tolerance
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed rollout final time
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = ["minimizer", "heuristic"])]
    policy: Option<String>,
    /// Atom-discard threshold for the heuristic policy
    #[arg(long)]
    discard: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Options {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) if !path.is_file() => {
                return Err(Failure::Usage(format!("config file `{}` not found", path.display())));
            }
            Some(path) => RunConfig::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.problem {
            cfg.problem = v.clone();
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        if self.y0.is_some() {
            cfg.y0 = self.y0.clone();
        }
        if let Some(v) = self.degree {
            cfg.degree = v;
        }
        if let Some(v) = self.state_grid {
            cfg.state_grid = v;
        }
        if let Some(v) = self.control_grid {
            cfg.control_grid = v;
        }
        if let Some(v) = self.candidate_grid {
            cfg.candidate_grid = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if self.epsilon.is_some() {
            cfg.epsilon = self.epsilon;
            cfg.steps = None;
        }
        if self.steps.is_some() {
            cfg.steps = self.steps;
        }
        if let Some(v) = &self.policy {
            cfg.policy = v.parse::<PolicyKind>().map_err(|e| Failure::Usage(e.to_string()))?;
        }
        if let Some(v) = self.discard {
            cfg.discard = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Reasons for a nonzero exit.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Stage(anyhow::Error),
    ChecksFailed,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Stage(e)
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve(o) => {
            stages::solve(&o.resolve()?)?;
        }
        Command::Rollout(o) => stages::rollout(&o.resolve()?)?,
        Command::Verify(o) => {
            if !stages::verify(&o.resolve()?)? {
                return Err(Failure::ChecksFailed);
            }
        }
        Command::Run(o) => {
            let cfg = o.resolve()?;
            stages::solve(&cfg)?;
            stages::rollout(&cfg)?;
            if !stages::verify(&cfg)? {
                return Err(Failure::ChecksFailed);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
        Err(Failure::ChecksFailed) => {
            eprintln!("verification FAILED");
            ExitCode::FAILURE
        }
    }
}
