use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clpm::generators::{RingParams, ScenarioSpec, Sim2Params, Simulated, Truth};
use clpm::io::{
    align_events, parse_grid_spec, parse_times, read_events, read_model, uniform_times, write_atomic, write_events,
    write_model, write_snapshots, FitMetadata, LabeledEvents, ModelFile,
};
use clpm::optimizer::{fit_with_dim, BatchMode, OptimizerConfig, Problem, StepRule};
use clpm::oracle::{finite_difference_check, random_instance};
use clpm::selftest::{run_suite, FD_STEP, GRADIENT_TOL};
use clpm::{PenaltyParams, Variant};

#[derive(Parser)]
#[command(name = "clpm", version, about = "Fit and simulate continuous latent position models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event list and its ground truth
    Simulate(SimulateArgs),
    /// Fit a model to an event CSV
    Fit(FitArgs),
    /// Export interpolated positions of a fitted model
    Snapshot(SnapshotArgs),
    /// Print the objective decomposition of a model on an event CSV
    Loglik(LoglikArgs),
    /// Compare the analytic gradient against finite differences
    Gradcheck(GradcheckArgs),
    /// Run the quadrature, gradient and unbiasedness oracle suite
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Sim1,
    Sim2,
    Sim3,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, required_unless_present = "config")]
    scenario: Option<Scenario>,
    /// JSON scenario file; overrides --scenario
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Events CSV to write
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV; defaults to `<out stem>.truth.csv`
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct PenaltyArgs {
    /// Variance of the initial positions
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    /// Increment variance per unit time
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Mean of the angle-cosine increments (projection variant)
    #[arg(long = "mu-angle", default_value_t = 1.0)]
    mu_angle: f64,
}

impl PenaltyArgs {
    fn params(&self) -> Result<PenaltyParams> {
        let p = PenaltyParams {
            sigma0_sq: self.sigma0,
            sigma_sq: self.sigma,
            mu_angle: self.mu_angle,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Events CSV with header `time,source,target`
    #[arg(long)]
    events: PathBuf,
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// `start:end:K` for K uniform knots, or a comma-separated knot list
    #[arg(long)]
    knots: String,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Use a constant step instead of moment-based steps
    #[arg(long)]
    fixed_step: bool,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Nodes per stochastic gradient step; omit for full-batch ascent
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// End of the observation window; defaults to the last knot
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Check the gradient by finite differences before fitting
    #[arg(long)]
    grad_check: bool,
    /// Model JSON to write
    #[arg(long)]
    out: PathBuf,
    /// Objective trace CSV; defaults to `<out stem>.trace.csv`
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Projection,
    Distance,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Projection => Variant::Projection,
            VariantArg::Distance => Variant::Distance,
        }
    }
}

#[derive(Args)]
struct SnapshotArgs {
    #[arg(long)]
    model: PathBuf,
    /// `start:end:count` or a comma-separated list; defaults to 101 times
    /// spanning the window
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LoglikArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    events: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Model JSON; a random model is drawn when omitted
    #[arg(long, requires = "events")]
    model: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "distance")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = FD_STEP)]
    step: f64,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random instances per variant for the integral checks
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Random instances per variant for the gradient checks
    #[arg(long, default_value_t = 20)]
    gradient_instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let spec = match (&args.config, args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ScenarioSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(Scenario::Sim1)) => ScenarioSpec::Sim1Blocks { seed: args.seed },
        (None, Some(Scenario::Sim2)) => ScenarioSpec::Sim2Cohesion {
            seed: args.seed,
            params: Sim2Params::default(),
        },
        (None, Some(Scenario::Sim3)) => ScenarioSpec::Sim3Ring {
            seed: args.seed,
            params: RingParams::default(),
        },
        (None, None) => bail!("either --scenario or --config is required"),
    };
    let Simulated { events, truth } = spec.generate()?;
    write_events(&LabeledEvents::numbered(events.clone()), &args.out)?;
    let truth_path = args.truth.unwrap_or_else(|| sibling(&args.out, "truth.csv"));
    match truth {
        Truth::Trajectories { state, grid } => {
            write_snapshots(&state, &grid, grid.knots(), None, &truth_path)?;
        }
        Truth::Blocks(schedule) => write_memberships(&schedule, &truth_path)?,
    }
    eprintln!(
        "wrote {} events on {} nodes to {} (truth: {})",
        events.len(),
        events.num_nodes(),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

/// `time,node,cluster` rows: the label of each node from each segment start.
fn write_memberships(schedule: &clpm::BlockSchedule, path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["time", "node", "cluster"])?;
    for (s, labels) in schedule.memberships.iter().enumerate() {
        let t = schedule.segment_bounds[s].to_string();
        for (node, c) in labels.iter().enumerate() {
            out.write_record([t.as_str(), &node.to_string(), &c.to_string()])?;
        }
    }
    let bytes = out.into_inner()?;
    write_atomic(path, |w| w.write_all(&bytes))?;
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let grid = parse_grid_spec(&args.knots)?;
    let horizon = args.horizon.unwrap_or(grid.horizon());
    if horizon != grid.horizon() {
        bail!("grid ends at {} but the horizon is {horizon}", grid.horizon());
    }
    let data = read_events(&args.events, Some(horizon))?;
    if data.events.num_nodes() < 2 {
        bail!("{} has fewer than two nodes; nothing to fit", args.events.display());
    }
    let penalty = args.penalty.params()?;
    let config = OptimizerConfig {
        mode: if args.batch_size.is_some() {
            BatchMode::Minibatch
        } else {
            BatchMode::FullBatch
        },
        batch_size: args.batch_size,
        step_rule: if args.fixed_step {
            StepRule::Fixed { step: args.step }
        } else {
            StepRule::adaptive(args.step)
        },
        max_iters: args.iters,
        seed: args.seed,
        grad_check: args.grad_check,
        ..OptimizerConfig::default()
    };
    let variant: Variant = args.variant.into();
    let result = fit_with_dim(&data.events, &grid, variant, &penalty, &config, args.dim)?;
    if let Some(err) = result.grad_check {
        eprintln!("gradient check at start: max relative discrepancy {err:.3e}");
    }
    let model = ModelFile::new(result.state, grid, data.labels, penalty)?.with_fit(FitMetadata {
        seed: args.seed,
        iterations: result.iterations,
        objective: result.best_objective,
        converged: result.converged,
    });
    write_model(&model, &args.out)?;

    let trace_path = args.trace.unwrap_or_else(|| sibling(&args.out, "trace.csv"));
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["iteration", "objective"])?;
    for p in &result.trace {
        out.write_record([p.iteration.to_string(), p.objective.to_string()])?;
    }
    let bytes = out.into_inner()?;
    write_atomic(&trace_path, |w| w.write_all(&bytes))?;

    eprintln!(
        "{} iterations, objective {:.6}, {}",
        result.iterations,
        result.best_objective,
        if result.converged {
            "converged"
        } else {
            "iteration limit reached"
        }
    );
    Ok(())
}

fn snapshot(args: SnapshotArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let times = match &args.times {
        Some(spec) => parse_times(spec)?,
        None => uniform_times(model.grid.horizon(), 101),
    };
    write_snapshots(&model.state, &model.grid, &times, Some(&model.labels), &args.out)?;
    Ok(())
}

fn load_problem(model_path: &Path, events_path: &Path) -> Result<(ModelFile, Problem)> {
    let model = read_model(model_path)?;
    let horizon = model.grid.horizon();
    let data = read_events(events_path, Some(horizon))?;
    let events = align_events(&data, &model.labels, horizon)?;
    let problem = Problem::new(model.state.variant(), model.grid.clone(), &events, model.penalty)?;
    Ok((model, problem))
}

fn loglik(args: LoglikArgs) -> Result<()> {
    let (model, problem) = load_problem(&args.model, &args.events)?;
    let parts = problem.objective_parts(&model.state)?;
    println!("variant         {}", model.state.variant());
    println!("events          {}", problem.num_events());
    println!("event term      {}", parts.event_term);
    println!("integral term   {}", parts.integral_term);
    println!("log-likelihood  {}", parts.event_term - parts.integral_term);
    println!("penalty         {}", parts.penalty);
    println!("objective       {}", parts.total);
    if parts.floored_events > 0 {
        println!("floored events  {}", parts.floored_events);
    }
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    let (problem, state) = match (&args.model, &args.events) {
        (Some(m), Some(e)) => {
            let (model, problem) = load_problem(m, e)?;
            (problem, model.state)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let inst = random_instance(&mut rng, args.variant.into(), 5, 6);
            let problem = Problem::new(inst.state.variant(), inst.grid, &inst.events, PenaltyParams::default())?;
            (problem, inst.state)
        }
    };
    let report = finite_difference_check(&problem, &state, args.step)?;
    println!(
        "max relative discrepancy {:.3e} over {} parameters",
        report.max_rel_error,
        report.analytic.len()
    );
    Ok(report.max_rel_error < GRADIENT_TOL)
}

fn selftest(args: SelftestArgs) -> Result<bool> {
    let outcomes = run_suite(args.instances, args.gradient_instances, args.seed)?;
    let mut ok = true;
    for o in &outcomes {
        println!(
            "{} {:<42} worst {:.3e} (tol {:.0e}, {} instances)",
            if o.passed() { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.tolerance,
            o.instances
        );
        ok &= o.passed();
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Snapshot(a) => snapshot(a).map(|_| true),
        Command::Loglik(a) => loglik(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
