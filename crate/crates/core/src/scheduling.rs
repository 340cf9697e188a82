//! Makespan minimization on unrelated machines with overheads: parametric
//! LP pruning, vertex rounding and min-max-processing-time branching.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::engine::{
    self, Adapter, BoundRule, EngineError, Evaluated, Expansion, Node, RunConfig, RunResult, Selection, Sense,
    StopRule,
};
use crate::instance::SchedulingInstance;
use crate::lp::{solve_vertex, FractionalGraph, LinearProgram, LpOutcome};
use crate::rational::{common_denominator, Rational};

pub use crate::engine::RoundRule;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulingError {
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(Rational),
    #[error("instance has no machines")]
    NoMachines,
    #[error("LP infeasible at the greedy makespan {0}")]
    UpperBracketInfeasible(Rational),
    #[error("vertex has no job-to-machine injection")]
    NoInjection,
    #[error("rounding rule {0:?} does not apply to scheduling")]
    BadRounding(RoundRule),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<SchedulingError> for EngineError {
    fn from(e: SchedulingError) -> Self {
        match e {
            SchedulingError::Engine(inner) => inner,
            other => EngineError::Adapter(other.to_string()),
        }
    }
}

/// Complete assignment of every job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub assignment: Vec<usize>,
    pub makespan: Rational,
}

impl Schedule {
    pub fn from_assignment(inst: &SchedulingInstance, assignment: Vec<usize>) -> Self {
        let makespan = makespan_of(inst, &assignment);
        Schedule { assignment, makespan }
    }

    pub fn loads(&self, inst: &SchedulingInstance) -> Vec<Rational> {
        let mut load = inst.overheads.clone();
        for (j, &i) in self.assignment.iter().enumerate() {
            load[i] += &inst.processing[j][i];
        }
        load
    }

    pub fn is_consistent(&self, inst: &SchedulingInstance) -> bool {
        self.assignment.len() == inst.n
            && self.assignment.iter().all(|&i| i < inst.m)
            && makespan_of(inst, &self.assignment) == self.makespan
    }
}

pub fn makespan_of(inst: &SchedulingInstance, assignment: &[usize]) -> Rational {
    let mut load = inst.overheads.clone();
    for (j, &i) in assignment.iter().enumerate() {
        load[i] += &inst.processing[j][i];
    }
    load.into_iter().max().unwrap_or_default()
}

/// Fixed jobs and the overheads they induce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partial {
    pub overheads: Vec<Rational>,
    pub fixed: Vec<Option<usize>>,
}

impl Partial {
    pub fn root(inst: &SchedulingInstance) -> Self {
        Partial {
            overheads: inst.overheads.clone(),
            fixed: vec![None; inst.n],
        }
    }

    pub fn fix(&self, inst: &SchedulingInstance, job: usize, machine: usize) -> Self {
        let mut next = self.clone();
        next.fixed[job] = Some(machine);
        next.overheads[machine] += &inst.processing[job][machine];
        next
    }

    pub fn unfixed(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed.iter().enumerate().filter(|(_, f)| f.is_none()).map(|(j, _)| j)
    }

    pub fn num_fixed(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_some()).count()
    }
}

/// Spacing of makespan guesses.
pub fn time_unit(inst: &SchedulingInstance) -> Rational {
    if let Some(unit) = &inst.time_unit {
        return unit.clone();
    }
    let d = common_denominator(inst.processing.iter().flatten().chain(&inst.overheads));
    Rational::from_bigints(BigInt::from(1), d)
}

fn grid_ceil(x: &Rational, unit: &Rational) -> Rational {
    Rational::from_bigints((x / unit).ceil(), BigInt::from(1))
}

/// Feasibility system at guess `t`: every unfixed job fully assigned,
/// machine `i` loaded at most `t - overhead_i`, and, when `restrict` is set,
/// only pairs with `p[j][i] <= t` allowed. Returns `None` when some job has
/// no allowed machine or some overhead already exceeds `t`.
pub fn assignment_lp(
    inst: &SchedulingInstance,
    partial: &Partial,
    t: &Rational,
    restrict: bool,
) -> Option<(LinearProgram, Vec<(usize, usize)>)> {
    if partial.overheads.iter().any(|o| o > t) {
        return None;
    }
    let mut vars = Vec::new();
    let mut job_rows = Vec::new();
    for j in partial.unfixed() {
        let mut row = Vec::new();
        for i in 0..inst.m {
            if !restrict || inst.processing[j][i] <= *t {
                row.push((vars.len(), Rational::one()));
                vars.push((j, i));
            }
        }
        if row.is_empty() {
            return None;
        }
        job_rows.push(row);
    }
    let mut lp = LinearProgram::new(vars.len());
    for row in job_rows {
        lp.add_eq(row, Rational::one());
    }
    for i in 0..inst.m {
        let terms: Vec<(usize, Rational)> = vars
            .iter()
            .enumerate()
            .filter(|(_, &(_, mi))| mi == i)
            .map(|(v, &(j, _))| (v, inst.processing[j][i].clone()))
            .collect();
        if !terms.is_empty() {
            lp.add_le(terms, t - &partial.overheads[i]);
        }
    }
    Some((lp, vars))
}

/// A vertex of the feasibility system at `t` as an `n x m` matrix, rows of
/// fixed jobs left zero.
pub fn vertex_at(inst: &SchedulingInstance, partial: &Partial, t: &Rational, restrict: bool) -> Option<Vec<Vec<Rational>>> {
    let (lp, vars) = assignment_lp(inst, partial, t, restrict)?;
    let vertex = match solve_vertex(&lp) {
        LpOutcome::Feasible(v) => v,
        LpOutcome::Infeasible => return None,
    };
    let mut x = vec![vec![Rational::zero(); inst.m]; inst.n];
    for (v, (j, i)) in vars.into_iter().enumerate() {
        x[j][i] = vertex.values[v].clone();
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TSearchResult {
    pub t_min: Rational,
    pub vertex: Vec<Vec<Rational>>,
    /// LP solves performed by the search.
    pub probes: usize,
}

/// Lower bracket: largest overhead, largest shortest time (restricted
/// only) and the average-load bound, rounded up to the grid.
fn lower_bracket(inst: &SchedulingInstance, partial: &Partial, restrict: bool, unit: &Rational) -> Rational {
    let m = Rational::from_integer(inst.m as i64);
    let mut total: Rational = partial.overheads.iter().sum();
    let mut lo = partial.overheads.iter().max().cloned().unwrap_or_default();
    for j in partial.unfixed() {
        let p = inst.min_time(j);
        total += &p;
        if restrict && p > lo {
            lo = p;
        }
    }
    let avg = &total / &m;
    let lo = lo.max(avg);
    &grid_ceil(&lo, unit) * unit
}

/// Makespan of list scheduling the unfixed jobs in index order, each onto
/// the machine where it would finish first.
pub fn greedy_makespan(inst: &SchedulingInstance, partial: &Partial) -> Rational {
    let mut load = partial.overheads.clone();
    for j in partial.unfixed() {
        let best = (0..inst.m)
            .min_by(|&a, &b| (&load[a] + &inst.processing[j][a]).cmp(&(&load[b] + &inst.processing[j][b])))
            .expect("at least one machine");
        load[best] += &inst.processing[j][best];
    }
    load.into_iter().max().unwrap_or_default()
}

/// Smallest grid value `t` at which the system is feasible. `hint` must be
/// a known lower bound (a parent's value); it is probed first and the
/// search proceeds upward by doubling, then bisection.
fn search_t(
    inst: &SchedulingInstance,
    partial: &Partial,
    hint: Option<&Rational>,
    restrict: bool,
) -> Result<TSearchResult, SchedulingError> {
    if inst.m == 0 {
        return Err(SchedulingError::NoMachines);
    }
    let unit = time_unit(inst);
    let mut lo = lower_bracket(inst, partial, restrict, &unit);
    if let Some(h) = hint {
        let h = &grid_ceil(h, &unit) * &unit;
        if h > lo {
            lo = h;
        }
    }
    let hi_value = greedy_makespan(inst, partial).max(lo.clone());
    let mut probes = 0usize;
    let mut probe = |t: &Rational| {
        probes += 1;
        vertex_at(inst, partial, t, restrict)
    };

    if let Some(x) = probe(&lo) {
        return Ok(TSearchResult {
            t_min: lo,
            vertex: x,
            probes,
        });
    }
    // Invariant: `bad` infeasible, `good` feasible (in grid steps above `lo`).
    let span = (&(&hi_value - &lo) / &unit).ceil();
    let span = Rational::from_bigints(span, BigInt::from(1));
    let mut bad = Rational::zero();
    let mut step = Rational::one();
    let (mut good, mut good_x) = loop {
        let k = if step >= span { span.clone() } else { step.clone() };
        let t = &lo + &(&k * &unit);
        match probe(&t) {
            Some(x) => break (k, x),
            None if k == span => return Err(SchedulingError::UpperBracketInfeasible(t)),
            None => {
                bad = k;
                step = &step * &Rational::from_integer(2);
            }
        }
    };
    let two = Rational::from_integer(2);
    while &good - &bad > Rational::one() {
        let mid = Rational::from_bigints((&(&good + &bad) / &two).floor(), BigInt::from(1));
        let t = &lo + &(&mid * &unit);
        match probe(&t) {
            Some(x) => {
                good = mid;
                good_x = x;
            }
            None => bad = mid,
        }
    }
    Ok(TSearchResult {
        t_min: &lo + &(&good * &unit),
        vertex: good_x,
        probes,
    })
}

/// Smallest grid `T` with the restricted system feasible.
pub fn min_feasible_t(
    inst: &SchedulingInstance,
    partial: &Partial,
    hint: Option<&Rational>,
) -> Result<TSearchResult, SchedulingError> {
    search_t(inst, partial, hint, true)
}

/// Smallest grid `T` at which the plain makespan relaxation is feasible.
pub fn relaxation_bound(
    inst: &SchedulingInstance,
    partial: &Partial,
    hint: Option<&Rational>,
) -> Result<TSearchResult, SchedulingError> {
    search_t(inst, partial, hint, false)
}

fn is_fractional_row(row: &[Rational]) -> bool {
    row.iter().filter(|v| !v.is_zero()).count() > 1
}

/// Jobs split across more than one machine.
pub fn fractional_jobs(x: &[Vec<Rational>]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, row)| is_fractional_row(row))
        .map(|(j, _)| j)
        .collect()
}

/// Fractional job with the largest shortest processing time, ties to the
/// lowest index.
pub fn mmp_pivot(inst: &SchedulingInstance, x: &[Vec<Rational>]) -> Option<usize> {
    fractional_jobs(x)
        .into_iter()
        .fold(None, |best: Option<(usize, Rational)>, j| {
            let p = inst.min_time(j);
            match best {
                Some((_, ref bp)) if *bp >= p => best,
                _ => Some((j, p)),
            }
        })
        .map(|(j, _)| j)
}

fn argmin_machine(inst: &SchedulingInstance, j: usize) -> usize {
    (0..inst.m)
        .min_by(|&a, &b| inst.processing[j][a].cmp(&inst.processing[j][b]).then(a.cmp(&b)))
        .expect("at least one machine")
}

/// Integral schedule from a vertex: fixed and integral jobs kept, split jobs
/// placed by `mode`.
pub fn round_vertex(
    inst: &SchedulingInstance,
    partial: &Partial,
    x: &[Vec<Rational>],
    mode: RoundRule,
) -> Result<Schedule, SchedulingError> {
    let mut assignment = vec![0usize; inst.n];
    let mut split = Vec::new();
    for j in 0..inst.n {
        if let Some(i) = partial.fixed[j] {
            assignment[j] = i;
        } else if is_fractional_row(&x[j]) {
            split.push(j);
        } else {
            assignment[j] = x[j].iter().position(|v| !v.is_zero()).expect("job assigned");
        }
    }
    match mode {
        RoundRule::As => {
            for &j in &split {
                assignment[j] = argmin_machine(inst, j);
            }
        }
        RoundRule::LstMatch => {
            let graph = FractionalGraph::from_assignment(x, inst.m);
            let matching = graph.job_injection().ok_or(SchedulingError::NoInjection)?;
            for (j, i) in matching {
                assignment[j] = i;
            }
        }
        RoundRule::Bm => {
            let mut base = inst.overheads.clone();
            for (j, &i) in assignment.iter().enumerate() {
                if !split.contains(&j) {
                    base[i] += &inst.processing[j][i];
                }
            }
            let best = best_placement(inst, &split, &base);
            for (&j, i) in split.iter().zip(best) {
                assignment[j] = i;
            }
        }
        RoundRule::Dantzig => return Err(SchedulingError::BadRounding(mode)),
    }
    Ok(Schedule::from_assignment(inst, assignment))
}

/// Exhaustive placement of `jobs` on top of loads `base`, minimizing the
/// makespan; the lexicographically first optimum wins.
fn best_placement(inst: &SchedulingInstance, jobs: &[usize], base: &[Rational]) -> Vec<usize> {
    fn go(
        inst: &SchedulingInstance,
        jobs: &[usize],
        k: usize,
        load: &mut Vec<Rational>,
        cur: &mut Vec<usize>,
        best: &mut Option<(Rational, Vec<usize>)>,
    ) {
        if k == jobs.len() {
            let span = load.iter().max().cloned().unwrap_or_default();
            if best.as_ref().is_none_or(|(b, _)| span < *b) {
                *best = Some((span, cur.clone()));
            }
            return;
        }
        let j = jobs[k];
        for i in 0..inst.m {
            load[i] += &inst.processing[j][i];
            cur.push(i);
            go(inst, jobs, k + 1, load, cur, best);
            cur.pop();
            load[i] -= &inst.processing[j][i];
        }
    }
    let mut best = None;
    go(inst, jobs, 0, &mut base.to_vec(), &mut Vec::new(), &mut best);
    best.map(|(_, a)| a).unwrap_or_default()
}

/// Structural checks on vertices and roundings, accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchedulingAudit {
    pub vertices: usize,
    pub too_many_fractional: usize,
    pub injection_failures: usize,
    pub lst_checks: usize,
    pub lst_violations: usize,
    pub gap_checks: usize,
    /// Nodes where `UB > LB + m * shortest time of the pivot`.
    pub gap_violations: usize,
    pub lp_probes: usize,
}

impl SchedulingAudit {
    pub fn merge(&mut self, other: &SchedulingAudit) {
        self.vertices += other.vertices;
        self.too_many_fractional += other.too_many_fractional;
        self.injection_failures += other.injection_failures;
        self.lst_checks += other.lst_checks;
        self.lst_violations += other.lst_violations;
        self.gap_checks += other.gap_checks;
        self.gap_violations += other.gap_violations;
        self.lp_probes += other.lp_probes;
    }

    pub fn record_vertex(&mut self, inst: &SchedulingInstance, x: &[Vec<Rational>]) {
        self.vertices += 1;
        if fractional_jobs(x).len() > inst.m {
            self.too_many_fractional += 1;
        }
        if FractionalGraph::from_assignment(x, inst.m).job_injection().is_none() {
            self.injection_failures += 1;
        }
    }

    pub fn record_lst(&mut self, schedule: &Schedule, t_min: &Rational) {
        self.lst_checks += 1;
        if schedule.makespan > t_min * &Rational::from_integer(2) {
            self.lst_violations += 1;
        }
    }
}

/// Node data: the partial assignment, its bound and vertex, and the
/// rounded schedule.
#[derive(Debug, Clone)]
pub struct SchedNode {
    pub partial: Partial,
    pub t_min: Rational,
    pub vertex: Vec<Vec<Rational>>,
    pub schedule: Schedule,
}

pub struct UnrelatedAdapter<'a> {
    inst: &'a SchedulingInstance,
    bound: BoundRule,
    round: RoundRule,
    pub audit: SchedulingAudit,
}

impl<'a> UnrelatedAdapter<'a> {
    pub fn new(inst: &'a SchedulingInstance, bound: BoundRule, round: RoundRule) -> Self {
        UnrelatedAdapter {
            inst,
            bound,
            round,
            audit: SchedulingAudit::default(),
        }
    }

    fn evaluate(
        &mut self,
        partial: Partial,
        hint: Option<&Rational>,
        decision: Option<(usize, usize)>,
    ) -> Result<Evaluated<SchedNode, Schedule>, EngineError> {
        let restrict = self.bound != BoundRule::Lr;
        let found = search_t(self.inst, &partial, hint, restrict)?;
        self.audit.lp_probes += found.probes;
        self.audit.record_vertex(self.inst, &found.vertex);
        let schedule = round_vertex(self.inst, &partial, &found.vertex, self.round)?;
        if self.round == RoundRule::LstMatch && restrict {
            self.audit.record_lst(&schedule, &found.t_min);
        }
        Ok(Evaluated {
            decision,
            is_right_turn: false,
            lb: found.t_min.clone(),
            ub: schedule.makespan.clone(),
            incumbent: Some((schedule.makespan.clone(), schedule.clone())),
            payload: SchedNode {
                partial,
                t_min: found.t_min,
                vertex: found.vertex,
                schedule,
            },
        })
    }
}

impl Adapter for UnrelatedAdapter<'_> {
    type Payload = SchedNode;
    type Solution = Schedule;

    fn sense(&self) -> Sense {
        Sense::Minimize
    }

    fn root(&mut self) -> Result<Evaluated<SchedNode, Schedule>, EngineError> {
        self.evaluate(Partial::root(self.inst), None, None)
    }

    fn expand(&mut self, node: &Node<SchedNode>) -> Result<Expansion<SchedNode, Schedule>, EngineError> {
        let data = &node.payload;
        let Some(pivot) = mmp_pivot(self.inst, &data.vertex) else {
            return Ok(Expansion::Leaf);
        };
        if matches!(self.round, RoundRule::As | RoundRule::Bm) {
            self.audit.gap_checks += 1;
            let m = Rational::from_integer(self.inst.m as i64);
            let slack = &data.t_min + &(&m * &self.inst.min_time(pivot));
            if data.schedule.makespan > slack {
                self.audit.gap_violations += 1;
            }
        }
        let mut children = Vec::with_capacity(self.inst.m);
        for i in 0..self.inst.m {
            let partial = data.partial.fix(self.inst, pivot, i);
            children.push(self.evaluate(partial, Some(&data.t_min), Some((pivot, i)))?);
        }
        Ok(Expansion::Children(children))
    }
}

/// `floor(m^2 / eps)`, the depth bound of the scheme.
pub fn depth_bound(m: usize, eps: &Rational) -> usize {
    let d = &Rational::from_integer((m * m) as i64) / eps;
    d.floor_i64().map_or(usize::MAX, |v| v.max(0) as usize)
}

#[derive(Debug, Clone)]
pub struct SchedulingRun {
    pub result: RunResult<Schedule>,
    pub audit: SchedulingAudit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrelatedOptions {
    pub selection: Selection,
    pub bound: BoundRule,
    pub round: RoundRule,
    pub node_limit: Option<usize>,
    /// Leave nodes at depth `floor(m^2 / eps)` and below unexpanded.
    pub cap_depth: bool,
}

impl Default for UnrelatedOptions {
    fn default() -> Self {
        UnrelatedOptions {
            selection: Selection::BestFirst,
            bound: BoundRule::Bs,
            round: RoundRule::As,
            node_limit: None,
            cap_depth: false,
        }
    }
}

/// Runs the scheme on an unrelated (or uniform, or identical) instance.
pub fn solve(inst: &SchedulingInstance, eps: &Rational, opts: &UnrelatedOptions) -> Result<SchedulingRun, SchedulingError> {
    if !eps.is_positive() {
        return Err(SchedulingError::BadEpsilon(eps.clone()));
    }
    if inst.m == 0 {
        return Err(SchedulingError::NoMachines);
    }
    if opts.round == RoundRule::Dantzig {
        return Err(SchedulingError::BadRounding(opts.round));
    }
    let mut adapter = UnrelatedAdapter::new(inst, opts.bound, opts.round);
    let mut cfg = RunConfig::new(opts.selection, StopRule::Epsilon(eps.clone()));
    cfg.node_limit = opts.node_limit;
    if opts.cap_depth {
        cfg.depth_limit = Some(depth_bound(inst.m, eps));
    }
    let result = engine::run(&mut adapter, &cfg)?;
    Ok(SchedulingRun {
        result,
        audit: adapter.audit,
    })
}
