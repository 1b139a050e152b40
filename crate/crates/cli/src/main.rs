//! `powss` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use powss::estimator::{planning_bounds, BoundsInput};
use powss::harness::{run_closed_loop, run_root_sweep, write_results, OutputFormat, SweepConfig, SweepRow};
use powss::pomdp::LosslessObservations;
use powss::problems::ProblemName;
use powss::solvers::{qmdp_q_values, select_action, ExactSolver};
use powss::{with_problem, Pomdp, SolverConfig, SolverKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "powss", version, about = "Sparse-sampling POMDP planners and their reference solvers")]
struct Cli {
    /// Worker threads for sweeps and closed-loop runs [default: available parallelism]
    #[arg(long, global = true, env = "POWSS_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan once from the initial belief and print the root Q estimates.
    Solve(SolveArgs),
    /// Repeat root planning over a grid of solvers and widths and write a table.
    Sweep(SweepArgs),
    /// Run planner-in-the-loop episodes against the exact belief filter.
    ClosedLoop(ClosedLoopArgs),
    /// Print exact and QMDP Q-values at the initial belief.
    Oracle(OracleArgs),
    /// Print the accuracy constants and the minimal width for a problem size.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    problem: ProblemName,
    #[arg(long)]
    solver: SolverKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    width: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON experiment config; excludes every grid flag
    #[arg(long, conflicts_with_all = ["problem", "solvers", "widths", "runs", "seed", "out", "format", "timing"])]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<ProblemName>,
    /// Comma-separated solvers [default: poss,powss]
    #[arg(long, value_delimiter = ',')]
    solvers: Vec<SolverKind>,
    /// Comma-separated, strictly increasing widths
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    widths: Vec<usize>,
    #[arg(long, required_unless_present = "config")]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, required_unless_present = "config")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Record wall time per run (output is then not reproducible)
    #[arg(long)]
    timing: bool,
}

impl SweepArgs {
    fn into_config(self) -> Result<SweepConfig> {
        let config = match self.config {
            Some(path) => SweepConfig::from_json_file(&path)?,
            None => SweepConfig {
                problem: self.problem.unwrap_or(ProblemName::CoTiger),
                solvers: if self.solvers.is_empty() {
                    vec![SolverKind::Poss, SolverKind::Powss]
                } else {
                    self.solvers
                },
                widths: self.widths,
                runs: self.runs.expect("required by clap"),
                seed: self.seed.unwrap_or(0),
                episodes: None,
                output: self.out.expect("required by clap"),
                format: self.format.unwrap_or(Format::Csv).into(),
                timing: self.timing,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct ClosedLoopArgs {
    /// JSON experiment config; every (solver, width) cell is evaluated
    #[arg(long, conflicts_with_all = ["problem", "solver", "width", "episodes", "seed"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    problem: Option<ProblemName>,
    #[arg(long, required_unless_present = "config")]
    solver: Option<SolverKind>,
    #[arg(long, required_unless_present = "config", value_parser = clap::value_parser!(u64).range(1..))]
    width: Option<u64>,
    #[arg(long, required_unless_present = "config", value_parser = clap::value_parser!(u64).range(1..))]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    problem: ProblemName,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Target accuracy of the root Q estimates
    #[arg(long, value_parser = positive)]
    epsilon: f64,
    #[arg(long, value_parser = discount)]
    gamma: f64,
    #[arg(long, value_parser = positive)]
    rmax: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    actions: u64,
    /// Bound on the target/proposal density ratio
    #[arg(long, value_parser = at_least_one)]
    dinf: f64,
    #[arg(long)]
    json: bool,
}

fn parse_float(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !x.is_finite() {
        return Err("must be finite".into());
    }
    Ok(x)
}

fn positive(s: &str) -> Result<f64, String> {
    let x = parse_float(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err("must be positive".into())
    }
}

fn discount(s: &str) -> Result<f64, String> {
    let x = parse_float(s)?;
    if (0.0..1.0).contains(&x) {
        Ok(x)
    } else {
        Err("must lie in [0, 1)".into())
    }
}

fn at_least_one(s: &str) -> Result<f64, String> {
    let x = parse_float(s)?;
    if x >= 1.0 {
        Ok(x)
    } else {
        Err("must be at least 1".into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Solve(args) => solve(args),
        Command::Sweep(args) => sweep(args),
        Command::ClosedLoop(args) => closed_loop(args),
        Command::Oracle(args) => with_problem!(args.problem, p => oracle(&p, args.problem, args.json)),
        Command::Bounds(args) => bounds(args),
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    with_problem!(args.problem, p => {
        let config = SolverConfig::new(&p, args.solver, args.width as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let q = select_action(&p, config, &mut rng)?;
        let best = p.action_name(q.best_action);
        if args.json {
            let per_action: serde_json::Map<_, _> = q
                .per_action
                .iter()
                .enumerate()
                .map(|(a, v)| (p.action_name(a), json!(v)))
                .collect();
            let out = json!({
                "problem": args.problem.as_str(),
                "solver": args.solver.as_str(),
                "width": args.width,
                "seed": args.seed,
                "q": per_action,
                "best_action": best,
                "value": q.value,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        } else {
            println!("{} {} width {} seed {}", args.problem, args.solver, args.width, args.seed);
            for (a, v) in q.per_action.iter().enumerate() {
                println!("  {:<8} {:>10.4}", p.action_name(a), v);
            }
            println!("chosen action: {best}");
        }
        Ok(())
    })
}

fn print_rows(rows: &[SweepRow]) {
    println!(
        "{:<6} {:>6} {:<8} {:>10} {:>10} {:>8}",
        "solver", "width", "action", "q_mean", "q_std", "select"
    );
    for r in rows {
        println!(
            "{:<6} {:>6} {:<8} {:>10.4} {:>10.4} {:>8.4}",
            r.solver.as_str(),
            r.width,
            r.action_name,
            r.q_mean,
            r.q_std,
            r.select_rate
        );
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let config = args.into_config()?;
    let result = with_problem!(config.problem, p => run_root_sweep(&p, &config))?;
    write_results(&result.rows, &config.output, config.format)?;
    print_rows(&result.rows);
    println!("wrote {} rows to {}", result.rows.len(), config.output.display());
    Ok(())
}

fn closed_loop(args: ClosedLoopArgs) -> Result<()> {
    let (problem, cells, episodes, seed) = match &args.config {
        Some(path) => {
            let config = SweepConfig::from_json_file(path)?;
            let Some(episodes) = config.episodes else {
                bail!("{} has no \"episodes\" field", path.display());
            };
            let mut solvers = config.solvers.clone();
            solvers.sort();
            solvers.dedup();
            let cells: Vec<_> = solvers
                .iter()
                .flat_map(|&s| config.widths.iter().map(move |&w| (s, w)))
                .collect();
            (config.problem, cells, episodes, config.seed)
        }
        None => (
            args.problem.expect("required by clap"),
            vec![(args.solver.expect("required by clap"), args.width.expect("required by clap") as usize)],
            args.episodes.expect("required by clap") as usize,
            args.seed.unwrap_or(0),
        ),
    };
    let mut results = Vec::new();
    for (solver, width) in cells {
        let stats = with_problem!(problem, p => run_closed_loop(&p, solver, width, episodes, seed, None))?;
        results.push(stats);
    }
    if args.json {
        let out: Vec<_> = results
            .iter()
            .map(|s| {
                json!({
                    "solver": s.solver.as_str(),
                    "width": s.width,
                    "episodes": s.episodes(),
                    "mean": s.mean,
                    "std": s.std,
                    "standard_error": s.standard_error(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&json!({ "problem": problem.as_str(), "seed": seed, "results": out }))?);
    } else {
        for s in &results {
            println!(
                "{} {} width {}: mean return {:.4} ± {:.4} over {} episodes (standard error {:.4})",
                problem,
                s.solver,
                s.width,
                s.mean,
                s.std,
                s.episodes(),
                s.standard_error()
            );
        }
    }
    Ok(())
}

fn oracle<P: LosslessObservations>(problem: &P, name: ProblemName, as_json: bool) -> Result<()> {
    let belief = problem.initial_belief();
    let exact = ExactSolver::default().q_values(problem, &belief, 0)?;
    let qmdp = qmdp_q_values(problem, &belief);
    if as_json {
        let actions: Vec<_> = (0..problem.action_count())
            .map(|a| json!({ "action": problem.action_name(a), "exact": exact[a], "qmdp": qmdp[a] }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&json!({ "problem": name.as_str(), "actions": actions }))?);
    } else {
        println!("{name} at the initial belief, horizon {}", problem.horizon());
        println!("  {:<8} {:>10} {:>10}", "action", "exact", "qmdp");
        for a in 0..problem.action_count() {
            println!("  {:<8} {:>10.4} {:>10.4}", problem.action_name(a), exact[a], qmdp[a]);
        }
    }
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let report = planning_bounds(BoundsInput {
        epsilon: args.epsilon,
        gamma: args.gamma,
        r_max: args.rmax,
        depth: args.depth as usize,
        action_count: args.actions as usize,
        d_inf_max: args.dinf,
    });
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("epsilon    {:.4e}", report.epsilon);
        println!("lambda     {:.4e}", report.lambda);
        println!("delta      {:.4e}", report.delta);
        println!("v_max      {:.4}", report.v_max);
        println!("d_inf_max  {:.4}", report.d_inf_max);
        println!("min_width  {}", report.min_width);
        println!("t_max      {:.4e}", report.t_max);
        for (d, alpha) in report.alpha_sequence.iter().enumerate() {
            println!("alpha[{d}]   {alpha:.4e}");
        }
    }
    Ok(())
}
