//! `hybridflow`: parse, simulate and bounded-check traffic junction models.
//!
//! Exit codes: 0 when the command succeeds (for `check`, no counterexample
//! within the bounds; for `check-diamond`, a witness was found; for `replay`,
//! the trace is certified), 1 when the search or replay comes out the other
//! way, and 2 for usage, input and evaluation errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridflow::checker::{self, CheckOptions, CheckReport, Claim, Mode};
use hybridflow::models::{builtin, BUILTIN};
use hybridflow::semantics::{CompiledModel, Trace};
use hybridflow::simulate::{simulate, SimOptions};
use hybridflow::syntax::{parse_formula, parse_model, Formula, ModelFile, Term};

#[derive(Parser)]
#[command(
    name = "hybridflow",
    version,
    about = "Bounded falsification of hybrid traffic junction models"
)]
struct Cli {
    /// Print statistics and timings to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model, then print it in normal form.
    Parse {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Run the model once with every nondeterministic choice fixed.
    Simulate(SimulateArgs),
    /// Search for a run that violates the model's safety formula.
    Check(CheckArgs),
    /// Search for a run that reaches a target formula.
    CheckDiamond {
        /// Formula the final state must satisfy.
        #[arg(long)]
        target: String,
        #[command(flatten)]
        check: CheckArgs,
    },
    /// Print the source of the builtin models.
    Models {
        /// Print only this model.
        #[arg(long)]
        name: Option<String>,
    },
    /// Re-execute a trace or report against a model.
    Replay {
        #[command(flatten)]
        model: ModelArg,
        /// Trace JSON, or a report produced by `check` or `check-diamond`.
        #[arg(long)]
        trace: PathBuf,
        /// Formula to establish instead of a safety violation; only used for
        /// bare traces.
        #[arg(long)]
        target: Option<String>,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Path to an .hpm file or the name of a builtin model.
    #[arg(long)]
    model: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overrides for declared constants.
#[derive(Args)]
struct ConstantArgs {
    /// Bus-stop slow-down factor.
    #[arg(long)]
    psi: Option<f64>,
    /// Turn ratio into lane 1 of the diverge.
    #[arg(long)]
    xi1: Option<f64>,
    /// Override any constant.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_binding)]
    set: Vec<(String, f64)>,
}

impl ConstantArgs {
    fn collect(&self) -> Result<BTreeMap<String, f64>> {
        let named = [("psi", self.psi), ("xi1", self.xi1)];
        let named = named
            .into_iter()
            .filter_map(|(n, v)| v.map(|v| (n.to_string(), v)));
        bindings(named.chain(self.set.iter().cloned()))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Signal phase (1 green, 0 red); fixes `pi`, or `P` in the bus-stop model.
    #[arg(long)]
    pi: Option<f64>,
    /// External inflow into lane 1.
    #[arg(long)]
    f1: Option<f64>,
    /// External outflow from lane 2.
    #[arg(long)]
    g2: Option<f64>,
    /// Fix any program variable.
    #[arg(long = "pin", value_name = "NAME=VALUE", value_parser = parse_binding)]
    pin: Vec<(String, f64)>,
    /// Initial value of a variable.
    #[arg(long = "init", value_name = "NAME=VALUE", value_parser = parse_binding)]
    init: Vec<(String, f64)>,
    #[command(flatten)]
    constants: ConstantArgs,
    /// Iterations of each loop.
    #[arg(long, default_value_t = 1)]
    loop_bound: usize,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Duration of each flow unless the domain is left earlier.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Points kept per flow.
    #[arg(long, default_value_t = 11)]
    flow_samples: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Maximum iterations of each loop.
    #[arg(long, default_value_t = 3)]
    loop_bound: usize,
    /// Grid points per nondeterministic assignment.
    #[arg(long, default_value_t = 9)]
    grid_points: usize,
    /// Stopping points per flow.
    #[arg(long, default_value_t = 8)]
    duration_samples: usize,
    /// RK4 step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Longest flow duration.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Grid points per dimension of the initial region.
    #[arg(long, default_value_t = 3)]
    init_samples: usize,
    /// Tolerance of the domain-exit search.
    #[arg(long, default_value_t = 1e-9)]
    event_tol: f64,
    /// Cell width for merging loop-head states; 0 disables merging.
    #[arg(long, default_value_t = 0.125)]
    merge_cell: f64,
    /// Perturb interior grid points, seeded by --seed.
    #[arg(long)]
    jitter: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    constants: ConstantArgs,
    #[command(flatten)]
    output: OutputArgs,
}

impl CheckArgs {
    fn options(&self) -> CheckOptions {
        CheckOptions {
            loop_bound: self.loop_bound,
            grid_points: self.grid_points,
            duration_samples: self.duration_samples,
            step: self.step,
            horizon: self.horizon,
            init_samples: self.init_samples,
            event_tol: self.event_tol,
            merge_cell: self.merge_cell,
            seed: self.seed,
            jitter: self.jitter,
        }
    }
}

fn parse_binding(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("`{value}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn bindings(pairs: impl Iterator<Item = (String, f64)>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (name, value) in pairs {
        if out.insert(name.clone(), value).is_some() {
            bail!("`{name}` is given twice");
        }
    }
    Ok(out)
}

fn load_model(spec: &str) -> Result<(String, ModelFile)> {
    let (origin, src) = match builtin(spec) {
        Some(b) if !Path::new(spec).exists() => (spec.to_string(), b.source.to_string()),
        _ => {
            let src =
                fs::read_to_string(spec).with_context(|| format!("cannot read model `{spec}`"))?;
            (spec.to_string(), src)
        }
    };
    let model = parse_model(&src).map_err(|e| match e.pos() {
        Some(p) => {
            let msg = e.to_string();
            let msg = msg.strip_prefix(&format!("{p}: ")).unwrap_or(&msg);
            anyhow!("{origin}:{p}: {msg}")
        }
        None => anyhow!("{origin}: {e}"),
    })?;
    Ok((origin, model))
}

fn compile(model: &ModelFile, origin: &str) -> Result<CompiledModel> {
    CompiledModel::new(model).with_context(|| format!("{origin}: model is not executable"))
}

/// Replaces the value of each overridden constant, keeping its range as a
/// check on the new value.
fn override_constants(model: &mut ModelFile, values: &BTreeMap<String, f64>) -> Result<()> {
    for (name, v) in values {
        if !v.is_finite() {
            bail!("{name} = {v} is not a finite number");
        }
        match model.constant(name) {
            Some(_) => {}
            None if model.variable(name).is_some() => {
                bail!("`{name}` is a variable, not a constant")
            }
            None => bail!("`{name}` is not declared in model `{}`", model.name),
        }
        let decl = model
            .constants
            .iter_mut()
            .find(|d| &d.name == name)
            .expect("constant exists");
        decl.value = Some(Term::Const(*v));
    }
    if values.is_empty() {
        return Ok(());
    }
    let m = CompiledModel::new(model)?;
    let Some(s) = checker::initial_states(&m, 1)?.into_iter().next() else {
        bail!("the overridden constants violate the model's assumption");
    };
    for name in values.keys() {
        let slot = m.sig.slot(name).expect("declared");
        if let Some(r) = &m.ranges[slot] {
            if !r.contains(s.values(), s.value(slot))? {
                bail!("{name} = {} lies outside its declared range", s.value(slot));
            }
        }
    }
    Ok(())
}

fn emit(out: &OutputArgs, text: &str) -> Result<()> {
    match &out.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_check(args: &CheckArgs, target: Option<&str>, verbose: u8) -> Result<ExitCode> {
    let (origin, mut model) = load_model(&args.model.model)?;
    override_constants(&mut model, &args.constants.collect()?)?;
    let m = compile(&model, &origin)?;
    let opts = args.options();
    let report = match target {
        None => checker::check_box(&m, &opts),
        Some(t) => {
            let f = parse_formula(t).map_err(|e| anyhow!("--target: {e}"))?;
            checker::check_diamond(&m, &f, &opts)
        }
    };
    let report = match report {
        Ok(r) => r,
        Err(checker::CheckError::Semantics { source, trace }) => {
            eprintln!("{}", trace.to_csv(&m.variable_names()));
            bail!(
                "evaluation failed after {} steps: {source}",
                trace.events.len()
            );
        }
        Err(e) => return Err(e.into()),
    };
    if verbose > 0 {
        eprintln!(
            "{:?} in {:.3} s",
            report.verdict,
            report.wall_time.as_secs_f64()
        );
        eprintln!("{:?}", report.stats);
    }
    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => match report.counterexample.as_ref().or(report.witness.as_ref()) {
            Some(ev) => ev.csv.clone(),
            None => {
                eprintln!("{:?}: no trace to export", report.verdict);
                String::new()
            }
        },
    };
    emit(&args.output, &text)?;
    let success = match report.mode {
        Mode::Box => !report.verdict.found(),
        Mode::Diamond => report.verdict.found(),
    };
    Ok(if success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run_simulate(args: &SimulateArgs, verbose: u8) -> Result<ExitCode> {
    let (origin, model) = load_model(&args.model.model)?;
    let m = compile(&model, &origin)?;
    let gate = if m.sig.slot("pi").is_none() && m.sig.slot("P").is_some() {
        "P"
    } else {
        "pi"
    };
    let named = [(gate, args.pi), ("f1", args.f1), ("g2", args.g2)];
    let named = named
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n.to_string(), v)));
    let opts = SimOptions {
        pins: bindings(named.chain(args.pin.iter().cloned()))?,
        constants: args.constants.collect()?,
        init: bindings(args.init.iter().cloned())?,
        loop_bound: args.loop_bound,
        step: args.step,
        horizon: args.horizon,
        flow_samples: args.flow_samples,
        ..SimOptions::default()
    };
    if !(opts.step.is_finite() && opts.step > 0.0 && opts.horizon.is_finite() && opts.horizon > 0.0)
    {
        bail!("step and horizon must be positive");
    }
    let trace = simulate(&m, &opts).map_err(|e| anyhow!("{origin}: {e}"))?;
    if verbose > 0 {
        eprintln!("{} events", trace.events.len());
    }
    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&trace)? + "\n",
        Format::Csv => trace.to_csv(&m.variable_names()),
    };
    emit(&args.output, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run_replay(model: &ModelArg, path: &Path, target: Option<&str>) -> Result<ExitCode> {
    let (origin, model) = load_model(&model.model)?;
    let m = compile(&model, &origin)?;
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let (trace, claim): (Trace, Option<Formula>) = match serde_json::from_str::<CheckReport>(&text)
    {
        Ok(report) => {
            let trace = report
                .trace()
                .cloned()
                .ok_or_else(|| anyhow!("{}: report has no trace", path.display()))?;
            let claim = match report.mode {
                Mode::Box => None,
                Mode::Diamond => Some(
                    parse_formula(&report.property).map_err(|e| anyhow!("report target: {e}"))?,
                ),
            };
            (trace, claim)
        }
        Err(_) => {
            let trace: Trace = serde_json::from_str(&text)
                .with_context(|| format!("`{}` is neither a report nor a trace", path.display()))?;
            let claim = target
                .map(parse_formula)
                .transpose()
                .map_err(|e| anyhow!("--target: {e}"))?;
            (trace, claim)
        }
    };
    let claim = match &claim {
        None => Claim::Violates,
        Some(f) => Claim::Reaches(f),
    };
    if checker::replay(&m, &trace, claim)? {
        println!(
            "certified: the trace is a run of `{}` and establishes its claim",
            m.model.name
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!(
            "rejected: the trace does not replay against `{}`",
            m.model.name
        );
        Ok(ExitCode::from(1))
    }
}

fn run_models(name: Option<&str>) -> Result<ExitCode> {
    match name {
        Some(n) => {
            let b = builtin(n).ok_or_else(|| {
                let names: Vec<&str> = BUILTIN.iter().map(|b| b.name).collect();
                anyhow!("no builtin model `{n}`; choose one of {}", names.join(", "))
            })?;
            print!("{}", b.source);
        }
        None => {
            for (i, b) in BUILTIN.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                println!("# --- {}: {}", b.name, b.summary);
                print!("{}", b.source);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("HYBRIDFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("HYBRIDFLOW_THREADS=`{v}` is not a count"))?;
    if n == 0 {
        bail!("HYBRIDFLOW_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Command::Parse { model } => {
            let (origin, model) = load_model(&model.model)?;
            compile(&model, &origin)?;
            print!("{model}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => run_simulate(args, cli.verbose),
        Command::Check(args) => run_check(args, None, cli.verbose),
        Command::CheckDiamond { target, check } => run_check(check, Some(target), cli.verbose),
        Command::Models { name } => run_models(name.as_deref()),
        Command::Replay {
            model,
            trace,
            target,
        } => run_replay(model, trace, target.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
