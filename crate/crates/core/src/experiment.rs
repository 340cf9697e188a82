//! Strategy sweeps over generated instances, CSV rows and summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{BoundRule, BranchRule, RoundRule, Selection, Termination};
use crate::instance::{generate, Instance, InstanceError, ProblemKind};
use crate::oracle::{exact_opt, optimality_gap, OracleError};
use crate::rational::Rational;
use crate::{knapsack, profiles, scheduling};

/// Offset added to gaps before taking logs.
pub const GAP_OFFSET: f64 = 1e-9;

/// Version of the result CSV column layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One algorithm configuration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategySpec {
    Knapsack(Selection, BranchRule),
    Scheduling(Selection, BoundRule, RoundRule),
    /// Profile pruning: similarity on uniform machines, equivalence on
    /// identical ones.
    Profile,
}

fn selection_of(tag: &str) -> Option<Selection> {
    match tag {
        "DFS" => Some(Selection::Dfs),
        "BFS" => Some(Selection::Bfs),
        "HUB" | "LLB" | "BEST" => Some(Selection::BestFirst),
        _ => None,
    }
}

impl StrategySpec {
    /// Parses `HUB/CE`, `LLB/BS/AS`, `PROFILE`.
    pub fn parse(text: &str) -> Option<Self> {
        let upper = text.trim().to_ascii_uppercase();
        let parts: Vec<&str> = upper.split('/').collect();
        match parts.as_slice() {
            ["PROFILE"] => Some(StrategySpec::Profile),
            [sel, br] => {
                let br = match *br {
                    "CE" => BranchRule::Ce,
                    "PPW" => BranchRule::Ppw,
                    "K" => BranchRule::K,
                    _ => return None,
                };
                Some(StrategySpec::Knapsack(selection_of(sel)?, br))
            }
            [sel, bound, round] => {
                let bound = match *bound {
                    "BS" => BoundRule::Bs,
                    "LR" => BoundRule::Lr,
                    _ => return None,
                };
                let round = match *round {
                    "AS" => RoundRule::As,
                    "BM" => RoundRule::Bm,
                    "LST" => RoundRule::LstMatch,
                    _ => return None,
                };
                Some(StrategySpec::Scheduling(selection_of(sel)?, bound, round))
            }
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StrategySpec::Knapsack(sel, br) => {
                let s = if sel == Selection::BestFirst { "HUB" } else { sel_tag(sel) };
                format!("{s}/{}", branch_tag(br))
            }
            StrategySpec::Scheduling(sel, bound, round) => {
                let s = if sel == Selection::BestFirst { "LLB" } else { sel_tag(sel) };
                let b = if bound == BoundRule::Lr { "LR" } else { "BS" };
                let r = match round {
                    RoundRule::As => "AS",
                    RoundRule::Bm => "BM",
                    _ => "LST",
                };
                format!("{s}/{b}/{r}")
            }
            StrategySpec::Profile => "PROFILE".to_string(),
        }
    }

    pub fn fits(&self, kind: ProblemKind) -> bool {
        match self {
            StrategySpec::Knapsack(..) => kind == ProblemKind::Knapsack,
            StrategySpec::Scheduling(..) => kind != ProblemKind::Knapsack,
            StrategySpec::Profile => matches!(kind, ProblemKind::SchedulingUniform | ProblemKind::SchedulingIdentical),
        }
    }
}

fn sel_tag(sel: Selection) -> &'static str {
    match sel {
        Selection::Dfs => "DFS",
        Selection::Bfs => "BFS",
        Selection::BestFirst => "BEST",
    }
}

fn branch_tag(br: BranchRule) -> &'static str {
    match br {
        BranchRule::Ce => "CE",
        BranchRule::Ppw => "PPW",
        BranchRule::K => "K",
        BranchRule::Mmp => "MMP",
    }
}

/// The full matrix for a problem kind.
pub fn default_strategies(kind: ProblemKind) -> Vec<StrategySpec> {
    let sels = [Selection::Dfs, Selection::Bfs, Selection::BestFirst];
    let mut out = Vec::new();
    if kind == ProblemKind::Knapsack {
        for s in sels {
            for b in [BranchRule::Ce, BranchRule::Ppw, BranchRule::K] {
                out.push(StrategySpec::Knapsack(s, b));
            }
        }
    } else {
        for s in sels {
            for bound in [BoundRule::Bs, BoundRule::Lr] {
                for round in [RoundRule::As, RoundRule::Bm] {
                    out.push(StrategySpec::Scheduling(s, bound, round));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub pairs: Vec<(usize, usize)>,
    #[serde(default = "default_instances")]
    pub instances_per_pair: usize,
    /// Explicit seeds; `0..instances_per_pair` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// `alpha` for knapsack, `eps` for scheduling; one sweep per value.
    #[serde(default)]
    pub params: Vec<Rational>,
    /// Strategy labels; the full matrix when absent.
    #[serde(default)]
    pub strategies: Option<Vec<String>>,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
    #[serde(default = "default_oracle_budget")]
    pub oracle_budget: usize,
    /// Skip the oracle (and gaps) entirely.
    #[serde(default)]
    pub no_oracle: bool,
}

fn default_instances() -> usize {
    30
}

fn default_node_limit() -> usize {
    10_000
}

fn default_oracle_budget() -> usize {
    crate::oracle::DEFAULT_BUDGET
}

impl ExperimentConfig {
    pub fn new(kind: ProblemKind, pairs: Vec<(usize, usize)>) -> Self {
        ExperimentConfig {
            problem: kind.name().to_string(),
            pairs,
            instances_per_pair: default_instances(),
            seeds: None,
            params: Vec::new(),
            strategies: None,
            node_limit: default_node_limit(),
            oracle_budget: default_oracle_budget(),
            no_oracle: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("run failed: {0}")]
    Run(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Validated form of a config.
#[derive(Debug, Clone)]
pub struct Plan {
    pub kind: ProblemKind,
    pub pairs: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub params: Vec<Rational>,
    pub strategies: Vec<StrategySpec>,
    pub node_limit: usize,
    pub oracle_budget: Option<usize>,
}

impl Plan {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let bad = |s: String| Err(ExperimentError::Config(s));
        let Some(kind) = ProblemKind::parse(&cfg.problem) else {
            return bad(format!("unknown problem kind `{}`", cfg.problem));
        };
        if cfg.pairs.is_empty() {
            return bad("no (n, m) pairs".into());
        }
        if cfg.pairs.iter().any(|&(n, m)| n == 0 || m == 0) {
            return bad("n and m must be positive".into());
        }
        let seeds = cfg.seeds.clone().unwrap_or_else(|| (0..cfg.instances_per_pair as u64).collect());
        if seeds.is_empty() {
            return bad("no seeds".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let strategies = match &cfg.strategies {
            None => default_strategies(kind),
            Some(list) => {
                let mut out = Vec::new();
                for s in list {
                    match StrategySpec::parse(s) {
                        Some(spec) if spec.fits(kind) => out.push(spec),
                        Some(_) => return bad(format!("strategy `{s}` does not apply to {}", kind.name())),
                        None => return bad(format!("unknown strategy `{s}`")),
                    }
                }
                out
            }
        };
        if strategies.is_empty() {
            return bad("empty strategy matrix".into());
        }
        let params = if cfg.params.is_empty() {
            vec![default_param(kind)]
        } else {
            cfg.params.clone()
        };
        for p in &params {
            let ok = match kind {
                ProblemKind::Knapsack => p.is_positive() && *p < Rational::one(),
                _ => p.is_positive(),
            };
            if !ok {
                return bad(format!("parameter {p} out of range"));
            }
        }
        if cfg.node_limit == 0 {
            return bad("node limit must be positive".into());
        }
        Ok(Plan {
            kind,
            pairs: cfg.pairs.clone(),
            seeds,
            params,
            strategies,
            node_limit: cfg.node_limit,
            oracle_budget: (!cfg.no_oracle).then_some(cfg.oracle_budget),
        })
    }
}

pub fn default_param(kind: ProblemKind) -> Rational {
    match kind {
        ProblemKind::Knapsack => Rational::new(97, 100),
        _ => Rational::new(1, 100),
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub strategy: String,
    pub param: Rational,
    pub nodes: usize,
    pub max_depth: usize,
    pub left_turns: Option<usize>,
    pub nodes_after_optimum: usize,
    pub value: Rational,
    pub bound: Rational,
    pub optimum: Option<Rational>,
    pub gap: Option<Rational>,
    pub gap_float: Option<f64>,
    pub guarantee_ok: Option<bool>,
    pub termination: String,
    pub wall_ms: f64,
}

/// Whether `value` is within the certified factor of `optimum`.
pub fn guarantee_holds(kind: ProblemKind, spec: StrategySpec, param: &Rational, value: &Rational, optimum: &Rational) -> bool {
    let one = Rational::one();
    match (kind, spec) {
        (ProblemKind::Knapsack, _) => *value >= param * optimum,
        (_, StrategySpec::Profile) => {
            let g = &one + param;
            *value <= &(&g * &g) * optimum
        }
        _ => *value <= &(&one + param) * optimum,
    }
}

/// Result of one strategy on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub strategy: String,
    pub param: Rational,
    pub value: Rational,
    pub bound: Rational,
    pub nodes: usize,
    pub max_depth: usize,
    pub left_turns: Option<usize>,
    pub nodes_after_optimum: usize,
    pub termination: Termination,
    /// Knapsack: item to knapsack (`None` = unpacked). Scheduling: job to machine.
    pub assignment: Vec<Option<usize>>,
}

/// Runs `spec` on `inst` with `param` as alpha or eps.
pub fn solve_instance(inst: &Instance, spec: StrategySpec, param: &Rational, node_limit: usize) -> Result<SolveOutput, ExperimentError> {
    let err = |e: &dyn std::fmt::Display| ExperimentError::Run(e.to_string());
    macro_rules! output {
        ($r:expr, $assign:expr) => {{
            let r = $r;
            SolveOutput {
                strategy: spec.label(),
                param: param.clone(),
                assignment: r.best_solution.as_ref().map($assign).unwrap_or_default(),
                nodes: r.nodes_explored,
                max_depth: r.max_depth,
                left_turns: r.left_turn_max,
                nodes_after_optimum: r.nodes_after_optimum,
                value: r.best_value,
                bound: r.global_bound,
                termination: r.termination,
            }
        }};
    }
    let jobs = |s: &crate::scheduling::Schedule| s.assignment.iter().map(|&i| Some(i)).collect::<Vec<_>>();
    match (inst, spec) {
        (Instance::Knapsack(k), StrategySpec::Knapsack(sel, br)) => {
            let run = knapsack::solve(k, param, sel, br, Some(node_limit)).map_err(|e| err(&e))?;
            Ok(output!(run.result, |s: &knapsack::IntKnapSolution| s.assignment.clone()))
        }
        (Instance::Scheduling(s), StrategySpec::Scheduling(sel, bound, round)) => {
            let opts = scheduling::UnrelatedOptions {
                selection: sel,
                bound,
                round,
                node_limit: Some(node_limit),
                cap_depth: false,
            };
            let run = scheduling::solve(s, param, &opts).map_err(|e| err(&e))?;
            Ok(output!(run.result, jobs))
        }
        (Instance::Scheduling(s), StrategySpec::Profile) => {
            let run = match s.model {
                crate::instance::MachineModel::Identical => profiles::solve_equivalent(s, param, Some(node_limit)),
                _ => profiles::solve_similar(s, param, Some(node_limit)),
            }
            .map_err(|e| err(&e))?;
            Ok(output!(run.result, jobs))
        }
        _ => Err(ExperimentError::Config(format!("strategy {} does not fit the instance", spec.label()))),
    }
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order follows input order.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Same as [`par_map`] but always sequential.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

fn instance_rows(plan: &Plan, n: usize, m: usize, seed: u64) -> Result<Vec<ResultRow>, ExperimentError> {
    let inst = generate(plan.kind, n, m, seed)?;
    let optimum = match plan.oracle_budget {
        Some(budget) => match exact_opt(&inst, budget) {
            Ok(r) => Some(r.optimum),
            Err(OracleError::BudgetExceeded(_)) => None,
        },
        None => None,
    };
    let mut rows = Vec::new();
    for param in &plan.params {
        for &spec in &plan.strategies {
            let start = Instant::now();
            let out = solve_instance(&inst, spec, param, plan.node_limit)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let gap = optimum.as_ref().map(|o| optimality_gap(&out.value, o));
            let guarantee_ok = match (&optimum, out.termination) {
                (Some(o), Termination::RatioMet | Termination::FrontierEmpty | Termination::Halted) => {
                    Some(guarantee_holds(plan.kind, spec, param, &out.value, o))
                }
                _ => None,
            };
            rows.push(ResultRow {
                problem: plan.kind.name().to_string(),
                n,
                m,
                seed,
                strategy: spec.label(),
                param: param.clone(),
                nodes: out.nodes,
                max_depth: out.max_depth,
                left_turns: out.left_turns,
                nodes_after_optimum: out.nodes_after_optimum,
                value: out.value,
                bound: out.bound,
                gap_float: gap.as_ref().map(Rational::to_f64),
                gap,
                optimum: optimum.clone(),
                guarantee_ok,
                termination: out.termination.name().to_string(),
                wall_ms,
            });
        }
    }
    Ok(rows)
}

/// Runs every (pair, seed, param, strategy) combination. Rows come back in
/// (pair, seed, param, strategy) order regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    let plan = Plan::from_config(cfg)?;
    run_plan(&plan, true)
}

pub fn run_plan(plan: &Plan, parallel: bool) -> Result<Vec<ResultRow>, ExperimentError> {
    let jobs: Vec<(usize, usize, u64)> = plan
        .pairs
        .iter()
        .flat_map(|&(n, m)| plan.seeds.iter().map(move |&s| (n, m, s)))
        .collect();
    let f = |&(n, m, s): &(usize, usize, u64)| instance_rows(plan, n, m, s);
    let chunks = if parallel { par_map(&jobs, f) } else { seq_map(&jobs, f) };
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Geometric mean `exp(mean(ln x))`.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let s: f64 = values.iter().map(|v| v.ln()).sum();
    Some((s / values.len() as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub problem: String,
    pub n: usize,
    pub m: usize,
    pub strategy: String,
    pub param: Rational,
    pub runs: usize,
    pub geo_nodes: f64,
    /// Geometric mean of `gap + GAP_OFFSET` over rows with a gap.
    pub geo_gap: Option<f64>,
    pub ratio_met: usize,
    pub node_limit: usize,
    pub guarantee_failures: usize,
}

pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Config("no result rows".into()));
    }
    let mut groups: BTreeMap<(String, usize, usize, Rational, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.problem.clone(), r.n, r.m, r.param.clone(), r.strategy.clone()))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((problem, n, m, param, strategy), rs)| {
            let nodes: Vec<f64> = rs.iter().map(|r| r.nodes as f64).collect();
            let gaps: Vec<f64> = rs.iter().filter_map(|r| r.gap_float.map(|g| g + GAP_OFFSET)).collect();
            SummaryRow {
                problem,
                n,
                m,
                strategy,
                param,
                runs: rs.len(),
                geo_nodes: geometric_mean(&nodes).unwrap_or(0.0),
                geo_gap: geometric_mean(&gaps),
                ratio_met: rs.iter().filter(|r| r.termination == "ratio-met").count(),
                node_limit: rs.iter().filter(|r| r.termination == "node-limit").count(),
                guarantee_failures: rs.iter().filter(|r| r.guarantee_ok == Some(false)).count(),
            }
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>4} {:>3} {:<10} {:>8} {:>5} {:>12} {:>12} {:>6} {:>6} {:>5}",
        "problem", "n", "m", "strategy", "param", "runs", "geo_nodes", "geo_gap", "ratio", "limit", "fail"
    );
    for r in rows {
        let gap = r.geo_gap.map_or("-".to_string(), |g| format!("{g:.3e}"));
        let _ = writeln!(
            s,
            "{:<22} {:>4} {:>3} {:<10} {:>8} {:>5} {:>12.2} {:>12} {:>6} {:>6} {:>5}",
            r.problem,
            r.n,
            r.m,
            r.strategy,
            r.param.to_string(),
            r.runs,
            r.geo_nodes,
            gap,
            r.ratio_met,
            r.node_limit,
            r.guarantee_failures
        );
    }
    let _ = writeln!(s, "geo_gap adds {GAP_OFFSET:e} to each gap before averaging logs");
    s
}

/// Groups where best-first explores more nodes (geometric mean) than the
/// depth-first or breadth-first variant with the same branching rule.
pub fn best_first_regressions(rows: &[SummaryRow]) -> Vec<String> {
    let mut warnings = Vec::new();
    for r in rows.iter().filter(|r| r.strategy.starts_with("HUB/") || r.strategy.starts_with("LLB/")) {
        let rest = &r.strategy[4..];
        for other in ["DFS", "BFS"] {
            let name = format!("{other}/{rest}");
            if let Some(o) = rows
                .iter()
                .find(|o| o.strategy == name && o.n == r.n && o.m == r.m && o.param == r.param && o.problem == r.problem)
            {
                if r.geo_nodes > o.geo_nodes {
                    warnings.push(format!(
                        "({}, {}) {}: {} explores {:.2} nodes vs {:.2} for {}",
                        r.n, r.m, r.param, r.strategy, r.geo_nodes, o.geo_nodes, name
                    ));
                }
            }
        }
    }
    warnings
}
