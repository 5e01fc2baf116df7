use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use occlp::config::PolicyKind;
use occlp::export::{trajectory_csv, trajectory_svg, SolutionFile};
use occlp::silp::{discard_small_atoms, solve_refined, AtomicMeasure};
use occlp::synthesis::{rollout as simulate, FeedbackPolicy, HeuristicPolicy, MinimizerPolicy, Rollout};
use occlp::verify::{kappa_estimate, value_iteration, verify_run, Interpolation, RunArtifacts, Tolerances};
use occlp::{DiscreteControlProblem, Error, MonomialBasis, RunConfig};

const SOLUTION: &str = "solution.json";

fn output(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(cfg.out.join(name))
}

fn write(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    let path = output(cfg, name)?;
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn solve(cfg: &RunConfig) -> Result<SolutionFile> {
    let problem = cfg.build_problem()?;
    let basis = cfg.basis(&problem);
    let refined = solve_refined(&problem, &basis, &cfg.base_grid(), &cfg.candidates(&problem), cfg.tol, cfg.max_rounds)?;
    let file = SolutionFile::new(&problem, cfg.degree, &refined);
    let kept = discard_small_atoms(&file.measure(), cfg.discard)?;

    let mut summary = String::new();
    writeln!(summary, "problem              {}", file.problem).unwrap();
    writeln!(summary, "alpha                {}", file.alpha).unwrap();
    writeln!(summary, "y0                   {:?}", file.y0).unwrap();
    writeln!(summary, "basis functions N    {}", basis.len()).unwrap();
    writeln!(summary, "lp columns           {}", file.columns).unwrap();
    writeln!(summary, "rounds               {}", file.rounds).unwrap();
    writeln!(summary, "primal value         {:.9}", file.value).unwrap();
    writeln!(summary, "mu                   {:.9}", file.mu).unwrap();
    writeln!(summary, "value/(1-alpha)      {:.6}", file.lower_bound).unwrap();
    writeln!(summary, "atoms                {}", file.atoms.len()).unwrap();
    writeln!(summary, "atoms >= {:<11} {}", cfg.discard, kept.len()).unwrap();
    writeln!(summary, "max dual violation   {:.3e}", file.max_dual_violation).unwrap();

    write(cfg, SOLUTION, &file.to_json()?)?;
    write(cfg, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(file)
}

struct Loaded {
    problem: DiscreteControlProblem,
    basis: MonomialBasis,
    solution: SolutionFile,
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg.out.join(SOLUTION);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {} (run `solve` first)", path.display()))?;
    let solution = SolutionFile::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let problem = cfg.build_problem()?;
    let basis = cfg.basis(&problem);
    if solution.problem != problem.name()
        || solution.alpha != problem.discount()
        || solution.y0 != problem.initial_state()
        || solution.degree != cfg.degree
        || solution.lambda.len() != basis.len()
    {
        bail!("{} was produced for a different problem or degree", path.display());
    }
    Ok(Loaded { problem, basis, solution })
}

fn run_policy(cfg: &RunConfig, ctx: &Loaded, measure: &AtomicMeasure) -> occlp::Result<Rollout> {
    let certificate = ctx.solution.certificate();
    let minimizer;
    let heuristic;
    let policy: &dyn FeedbackPolicy = match cfg.policy {
        PolicyKind::Minimizer => {
            minimizer = MinimizerPolicy {
                basis: &ctx.basis,
                certificate: &certificate,
                control_grid: ctx.problem.control_grid(cfg.policy_grid),
                polish: false,
            };
            &minimizer
        }
        PolicyKind::Heuristic => {
            heuristic = HeuristicPolicy { measure };
            &heuristic
        }
    };
    simulate(&ctx.problem, policy, &cfg.rollout_spec(&ctx.problem)).map(|r| r.with_gap(&certificate))
}

fn trajectory_files(cfg: &RunConfig, ctx: &Loaded, r: &Rollout, measure: &AtomicMeasure) -> Result<()> {
    let footer = [
        ("value", r.truncated_value),
        ("gap", r.gap.unwrap_or(f64::NAN)),
        ("lower_bound", ctx.solution.lower_bound),
        ("truncation_bound", r.truncation_bound),
    ];
    let csv = trajectory_csv(r, ctx.problem.state_dim(), ctx.problem.control_dim(), &footer);
    write(cfg, "trajectory.csv", &csv)?;
    write(cfg, "trajectory.svg", &trajectory_svg(&ctx.problem, r, measure))
}

pub fn rollout(cfg: &RunConfig) -> Result<()> {
    let ctx = load(cfg)?;
    let measure = discard_small_atoms(&ctx.solution.measure(), cfg.discard)?;
    match run_policy(cfg, &ctx, &measure) {
        Ok(r) => {
            trajectory_files(cfg, &ctx, &r, &measure)?;
            println!(
                "{} rollout: T = {}, value {:.6}, gap {:.6}",
                cfg.policy,
                r.final_time().unwrap_or(0),
                r.truncated_value,
                r.gap.unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Err(Error::RolloutAborted { t, partial, source }) => {
            trajectory_files(cfg, &ctx, &partial, &measure)?;
            bail!("{} policy failed at t = {t}: {source}", cfg.policy)
        }
        Err(e) => Err(e.into()),
    }
}

/// Returns whether every check passed.
pub fn verify(cfg: &RunConfig) -> Result<bool> {
    let ctx = load(cfg)?;
    let measure = ctx.solution.measure();
    let kept = discard_small_atoms(&measure, cfg.discard)?;
    let r = run_policy(cfg, &ctx, &kept)?;
    let oracle = match value_iteration(
        &ctx.problem,
        cfg.oracle_state_grid,
        cfg.oracle_control_grid,
        cfg.oracle_tol,
        100_000,
        Interpolation::Multilinear,
    ) {
        Ok(v) => v,
        Err(Error::NotConverged { last, .. }) => {
            log::warn!("value iteration did not converge; using the last sweep");
            *last
        }
        Err(e) => return Err(e.into()),
    };
    let certificate = ctx.solution.certificate();
    let candidates = cfg.candidates(&ctx.problem);
    let artifacts = RunArtifacts {
        problem: &ctx.problem,
        basis: &ctx.basis,
        measure: &measure,
        certificate: &certificate,
        value: ctx.solution.value,
        rollout: &r,
        candidates: &candidates,
        oracle: &oracle,
        control_points: cfg.oracle_control_grid,
    };
    let tolerances = Tolerances {
        dual_feasibility: cfg.tol,
        kappa: cfg.kappa_tol,
        gap: cfg.gap_tol,
        ..Tolerances::default()
    };
    let mut report = verify_run(&artifacts, &tolerances)?;
    let alpha = ctx.problem.discount();
    let oracle_y0 = oracle.interpolate(ctx.problem.initial_state());
    report.kappa_estimate = Some(kappa_estimate(certificate.mu, certificate.mu, oracle_y0, alpha));

    let mut text = String::new();
    writeln!(text, "problem {} alpha {} policy {}", ctx.problem.name(), alpha, cfg.policy).unwrap();
    writeln!(text, "lower bound mu/(1-alpha)  {:.6}", ctx.solution.lower_bound).unwrap();
    writeln!(text, "rollout value             {:.6}", r.truncated_value).unwrap();
    writeln!(text, "oracle V(y0)              {:.6}", oracle_y0).unwrap();
    writeln!(text).unwrap();
    write!(text, "{report}").unwrap();
    write(cfg, "report.txt", &text)?;
    print!("{text}");
    Ok(report.all_pass())
}
