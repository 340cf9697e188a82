use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use approxbnb::experiment::{
    best_first_regressions, default_param, read_csv, run_plan, solve_instance, summarize, summary_table,
    write_csv, write_summary_csv, ExperimentConfig, ExperimentError, Plan, StrategySpec,
};
use approxbnb::instance::{generate, Instance, InstanceError, MachineModel, ProblemKind};
use approxbnb::oracle::{exact_opt, OracleError, DEFAULT_BUDGET};
use approxbnb::Rational;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Branch-and-bound approximation schemes for multiple knapsack and
/// parallel machine scheduling.
#[derive(Parser)]
#[command(name = "approxbnb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance as JSON.
    Generate {
        /// knapsack, scheduling-unrelated, scheduling-uniform or scheduling-identical.
        #[arg(long)]
        problem: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one strategy on an instance file and print the result as JSON.
    Solve {
        instance: PathBuf,
        /// Strategy label such as HUB/CE, LLB/BS/AS or PROFILE.
        #[arg(long)]
        strategy: Option<String>,
        /// alpha for knapsack, eps for scheduling, as `num/den`.
        #[arg(long)]
        param: Option<Rational>,
        #[arg(long, default_value_t = 10_000)]
        node_limit: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the exact optimum of an instance file.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a strategy sweep and write one CSV row per (instance, strategy).
    Experiment(ExperimentArgs),
    /// Aggregate an experiment CSV into geometric means.
    Summarize {
        results: PathBuf,
        /// Also write the summary as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// `n x m` pair, e.g. `10x2`; repeatable.
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<(usize, usize)>,
    #[arg(long)]
    instances_per_pair: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// alpha or eps value; repeatable.
    #[arg(long = "param")]
    params: Vec<Rational>,
    /// Strategy label; repeatable. The full matrix when omitted.
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long)]
    oracle_budget: Option<usize>,
    #[arg(long)]
    no_oracle: bool,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (n, m) = s
        .split_once(['x', 'X', ','])
        .ok_or_else(|| format!("expected NxM, got `{s}`"))?;
    let n = n.trim().parse().map_err(|_| format!("bad n in `{s}`"))?;
    let m = m.trim().parse().map_err(|_| format!("bad m in `{s}`"))?;
    Ok((n, m))
}

enum Failure {
    Validation(String),
    Budget(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Budget(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<InstanceError> for Failure {
    fn from(e: InstanceError) -> Self {
        match e {
            InstanceError::Io(_) => Failure::Other(e.into()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Instance(_) => Failure::Validation(e.to_string()),
            ExperimentError::Oracle(_) => Failure::Budget(e.to_string()),
            _ => Failure::Other(e.into()),
        }
    }
}

fn sink(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn kind_of(inst: &Instance) -> ProblemKind {
    match inst {
        Instance::Knapsack(_) => ProblemKind::Knapsack,
        Instance::Scheduling(s) => match s.model {
            MachineModel::Unrelated => ProblemKind::SchedulingUnrelated,
            MachineModel::Uniform => ProblemKind::SchedulingUniform,
            MachineModel::Identical => ProblemKind::SchedulingIdentical,
        },
    }
}

fn problem_kind(name: &str) -> Result<ProblemKind, Failure> {
    ProblemKind::parse(name).ok_or_else(|| Failure::Validation(format!("unknown problem kind `{name}`")))
}

fn cmd_solve(
    path: &Path,
    strategy: Option<&str>,
    param: Option<Rational>,
    node_limit: usize,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let inst = Instance::read_file(path)?;
    let kind = kind_of(&inst);
    let label = strategy.unwrap_or(if kind == ProblemKind::Knapsack { "HUB/CE" } else { "LLB/BS/AS" });
    let spec = StrategySpec::parse(label).ok_or_else(|| Failure::Validation(format!("unknown strategy `{label}`")))?;
    if !spec.fits(kind) {
        return Err(Failure::Validation(format!("strategy `{label}` does not apply to {}", kind.name())));
    }
    if node_limit == 0 {
        return Err(Failure::Validation("node limit must be positive".into()));
    }
    let param = param.unwrap_or_else(|| default_param(kind));
    let result = solve_instance(&inst, spec, &param, node_limit).map_err(|e| match e {
        ExperimentError::Run(msg) => Failure::Validation(msg),
        other => other.into(),
    })?;
    write_json(&result, out)?;
    Ok(())
}

fn cmd_oracle(path: &Path, budget: usize, out: Option<&Path>) -> Result<(), Failure> {
    let inst = Instance::read_file(path)?;
    match exact_opt(&inst, budget) {
        Ok(res) => Ok(write_json(&res, out)?),
        Err(e @ OracleError::BudgetExceeded(_)) => Err(Failure::Budget(e.to_string())),
    }
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("config: {e}")))?
        }
        None => {
            let problem = args
                .problem
                .as_deref()
                .ok_or_else(|| Failure::Validation("--problem or --config is required".into()))?;
            ExperimentConfig::new(problem_kind(problem)?, Vec::new())
        }
    };
    if let Some(p) = &args.problem {
        cfg.problem = p.clone();
    }
    if !args.pairs.is_empty() {
        cfg.pairs = args.pairs.clone();
    }
    if let Some(k) = args.instances_per_pair {
        cfg.instances_per_pair = k;
    }
    if args.seeds.is_some() {
        cfg.seeds = args.seeds.clone();
    }
    if !args.params.is_empty() {
        cfg.params = args.params.clone();
    }
    if !args.strategies.is_empty() {
        cfg.strategies = Some(args.strategies.clone());
    }
    if let Some(l) = args.node_limit {
        cfg.node_limit = l;
    }
    if let Some(b) = args.oracle_budget {
        cfg.oracle_budget = b;
    }
    cfg.no_oracle |= args.no_oracle;
    Ok(cfg)
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let cfg = experiment_config(args)?;
    let plan = Plan::from_config(&cfg)?;
    let rows = run_plan(&plan, !args.sequential)?;
    write_csv(&rows, sink(args.out.as_deref())?)?;
    if args.out.is_some() {
        eprintln!("{} rows written", rows.len());
    }
    Ok(())
}

fn cmd_summarize(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_csv(file).map_err(|e| Failure::Validation(e.to_string()))?;
    let summary = summarize(&rows).map_err(|e| Failure::Validation(e.to_string()))?;
    print!("{}", summary_table(&summary));
    for w in best_first_regressions(&summary) {
        eprintln!("warning: {w}");
    }
    if let Some(p) = out {
        write_summary_csv(&summary, sink(Some(p))?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { problem, n, m, seed, out } => {
            let inst = generate(problem_kind(&problem)?, n, m, seed)?;
            match out {
                Some(p) => inst.write_file(&p)?,
                None => println!("{}", inst.to_json()),
            }
            Ok(())
        }
        Command::Solve {
            instance,
            strategy,
            param,
            node_limit,
            out,
        } => cmd_solve(&instance, strategy.as_deref(), param, node_limit, out.as_deref()),
        Command::Oracle { instance, budget, out } => cmd_oracle(&instance, budget, out.as_deref()),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::Summarize { results, out } => cmd_summarize(&results, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(msg) => eprintln!("error: {msg}"),
                Failure::Budget(msg) => eprintln!("error: {msg}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
