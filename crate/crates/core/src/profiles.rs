//! Profile-based pruning for uniform and identical machines.
//!
//! Both schemes work on a normalized copy of the instance whose root
//! fractional optimum is 1, always branch on the longest unfixed job, and
//! discard a child when another node of the same depth already holds an
//! equivalent profile: the same cell of an additive grid for uniform
//! machines, or the same multiset of geometrically rounded machine loads
//! for identical machines.

use std::collections::{BTreeSet, HashSet};

use num_bigint::BigInt;

use crate::engine::{
    self, Adapter, EngineError, Evaluated, Expansion, Node, RunConfig, RunResult, Selection, Sense, StopRule,
};
use crate::instance::{MachineModel, SchedulingInstance};
use crate::lp::FractionalGraph;
use crate::rational::Rational;
use crate::scheduling::{
    self, fractional_jobs, min_feasible_t, round_vertex, Partial, RoundRule, Schedule, SchedulingError,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("profile pruning needs uniform or identical machines, got {0:?}")]
    WrongModel(MachineModel),
    #[error("instance has no jobs")]
    Empty,
    #[error("epsilon {0} outside the supported range")]
    BadEpsilon(Rational),
    #[error(transparent)]
    Scheduling(#[from] SchedulingError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Copy of `inst` scaled so that its root fractional optimum is 1, with the
/// scale. The makespan-guess grid is scaled along.
pub fn normalize(inst: &SchedulingInstance) -> Result<(SchedulingInstance, Rational), ProfileError> {
    if inst.model == MachineModel::Unrelated {
        return Err(ProfileError::WrongModel(inst.model));
    }
    if inst.n == 0 {
        return Err(ProfileError::Empty);
    }
    let scale = min_feasible_t(inst, &Partial::root(inst), None)?.t_min;
    let unit = scheduling::time_unit(inst);
    let div = |v: &Vec<Rational>| v.iter().map(|x| x / &scale).collect::<Vec<_>>();
    let mut out = inst.clone();
    out.processing = inst.processing.iter().map(div).collect();
    out.overheads = div(&inst.overheads);
    out.base_times = inst.base_times.as_ref().map(div);
    out.time_unit = Some(&unit / &scale);
    Ok((out, scale))
}

/// Jobs by decreasing length, ties to the lower index.
pub fn longest_first(inst: &SchedulingInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.n).collect();
    order.sort_by(|&a, &b| inst.processing[b][0].cmp(&inst.processing[a][0]).then(a.cmp(&b)));
    order
}

/// `2(1+eps)^2`: loads above this cannot lead to a `(1+eps)^2` answer.
pub fn cube_side(eps: &Rational) -> Rational {
    let g = Rational::one() + eps;
    &Rational::from_integer(2) * &(&g * &g)
}

/// Per-coordinate grid index `floor(profile_i * n / eps)`, or `None` when a
/// coordinate leaves the cube.
pub fn similarity_cell(profile: &[Rational], eps: &Rational, n: usize) -> Option<Vec<BigInt>> {
    let side = cube_side(eps);
    if profile.iter().any(|c| *c > side) {
        return None;
    }
    let k = &Rational::from_integer(n as i64) / eps;
    Some(profile.iter().map(|c| (c * &k).floor()).collect())
}

/// `(3n(1+eps)^2/eps)^m`, the per-level node bound under similarity pruning.
pub fn similar_level_bound(n: usize, m: usize, eps: &Rational) -> Rational {
    let g = Rational::one() + eps;
    let base = &(&Rational::from_integer(3 * n as i64) * &(&g * &g)) / eps;
    base.pow(m as u32)
}

/// Largest `eps(1+eps)^k <= x` over `k >= 0`; `None` when `x < eps`.
pub fn round_geo(x: &Rational, eps: &Rational) -> Option<Rational> {
    if x < eps {
        return None;
    }
    let g = Rational::one() + eps;
    let mut v = eps.clone();
    loop {
        let next = &v * &g;
        if next > *x {
            return Some(v);
        }
        v = next;
    }
}

/// `8 (1/eps)^{log_{1+eps}(2(1+eps)^2/eps)}`: bound on the number of
/// distinct rounded loads of a machine.
pub fn rounded_value_bound(eps: f64) -> f64 {
    let exponent = (2.0 * (1.0 + eps).powi(2) / eps).ln() / (1.0 + eps).ln();
    8.0 * (1.0 / eps).powf(exponent)
}

/// Multiset of rounded machine loads, as sorted `(load, machines)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EquivalenceKey(pub Vec<(Rational, usize)>);

impl EquivalenceKey {
    pub fn machines(&self) -> usize {
        self.0.iter().map(|(_, c)| c).sum()
    }
}

/// A fixed job shorter than `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmallJob(pub usize);

/// Rounded loads per machine: each fixed job contributes `round(p_j)`.
pub fn rounded_loads(inst: &SchedulingInstance, partial: &Partial, eps: &Rational) -> Result<Vec<Rational>, SmallJob> {
    let mut loads = inst.overheads.clone();
    for (j, f) in partial.fixed.iter().enumerate() {
        if let Some(i) = *f {
            let p = &inst.processing[j][i];
            loads[i] += &round_geo(p, eps).ok_or(SmallJob(j))?;
        }
    }
    Ok(loads)
}

pub fn equivalence_key(inst: &SchedulingInstance, partial: &Partial, eps: &Rational) -> Result<EquivalenceKey, SmallJob> {
    let mut loads = rounded_loads(inst, partial, eps)?;
    loads.sort();
    let mut pairs: Vec<(Rational, usize)> = Vec::new();
    for v in loads {
        match pairs.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => pairs.push((v, 1)),
        }
    }
    Ok(EquivalenceKey(pairs))
}

/// Machine completion times `t_i + sum_j p_{j,i} x_{j,i}` (unfixed part
/// from `x`, fixed part already in the overheads).
pub fn completion_times(inst: &SchedulingInstance, partial: &Partial, x: &[Vec<Rational>]) -> Vec<Rational> {
    let mut c = partial.overheads.clone();
    for (j, row) in x.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if !v.is_zero() {
                c[i] += &(v * &inst.processing[j][i]);
            }
        }
    }
    c
}

/// Structural vertex test for uniform machines: the fractional graph is a
/// forest and each component has at most one machine finishing before `t`.
pub fn uniform_vertex_check(inst: &SchedulingInstance, partial: &Partial, x: &[Vec<Rational>], t: &Rational) -> bool {
    let graph = FractionalGraph::from_assignment(x, inst.m);
    if !graph.is_forest() {
        return false;
    }
    let c = completion_times(inst, partial, x);
    graph
        .components()
        .iter()
        .all(|(machines, _)| machines.iter().filter(|&&i| c[i] < *t).count() <= 1)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("vertex has no fractional job")]
    Integral,
    #[error("job {0} is not integrally assigned")]
    NotIntegral(usize),
    #[error("no fractional job can trade places with job {0} inside the eligible pairs")]
    NoEligibleSwap(usize),
}

/// Moves fractional mass so that job `longest` becomes fractional while
/// every machine keeps its completion time: `longest` gives `e1` of itself
/// from its machine `a` to a machine `b`, and a fractional job `j` moves its
/// whole share `e2 = x[j][b]` from `b` to `a`, with `e1 = e2 p_j / p_longest`.
/// A `j` that already touches `a` is preferred.
pub fn make_longest_fractional(
    inst: &SchedulingInstance,
    x: &[Vec<Rational>],
    longest: usize,
    t: &Rational,
) -> Result<Vec<Vec<Rational>>, TransformError> {
    let row = &x[longest];
    if row.iter().filter(|v| !v.is_zero()).count() > 1 {
        return Ok(x.to_vec());
    }
    let a = row.iter().position(|v| *v == Rational::one()).ok_or(TransformError::NotIntegral(longest))?;
    let frac = fractional_jobs(x);
    if frac.is_empty() {
        return Err(TransformError::Integral);
    }
    let touching: Vec<usize> = frac.iter().copied().filter(|&j| !x[j][a].is_zero()).collect();
    let pool = if touching.is_empty() { frac } else { touching };
    for j in pool {
        for b in (0..inst.m).filter(|&b| b != a && !x[j][b].is_zero()) {
            if inst.processing[longest][b] > *t || inst.processing[j][a] > *t {
                continue;
            }
            let e2 = x[j][b].clone();
            let e1 = &(&e2 * &inst.processing[j][a]) / &inst.processing[longest][a];
            let mut out = x.to_vec();
            out[longest][a] = Rational::one() - &e1;
            out[longest][b] = e1;
            out[j][a] += &e2;
            out[j][b] = Rational::zero();
            return Ok(out);
        }
    }
    Err(TransformError::NoEligibleSwap(longest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMode {
    /// Additive grid cells, uniform machines.
    Similar,
    /// Rounded-load multisets, identical machines.
    Equivalent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileAudit {
    pub nodes_solved: usize,
    pub transforms: usize,
    /// Nodes where no swap was eligible; the longest job is branched on anyway.
    pub transform_fallbacks: usize,
    pub vertex_check_failures: usize,
    pub lst_violations: usize,
    pub rejected_out_of_cube: usize,
    pub rejected_duplicate: usize,
    /// Distinct rounded machine loads seen in equivalence keys.
    pub rounded_values: BTreeSet<Rational>,
    pub small_job_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Cell(Vec<BigInt>),
    Counts(EquivalenceKey),
}

#[derive(Debug, Clone)]
pub struct ProfileNode {
    pub partial: Partial,
    pub t_min: Rational,
    pub vertex: Vec<Vec<Rational>>,
    pub schedule: Schedule,
}

/// Adapter over a normalized instance.
pub struct ProfileAdapter<'a> {
    inst: &'a SchedulingInstance,
    order: Vec<usize>,
    eps: Rational,
    mode: ProfileMode,
    seen: HashSet<(usize, Key)>,
    pub audit: ProfileAudit,
}

impl<'a> ProfileAdapter<'a> {
    pub fn new(inst: &'a SchedulingInstance, eps: Rational, mode: ProfileMode) -> Self {
        ProfileAdapter {
            order: longest_first(inst),
            inst,
            eps,
            mode,
            seen: HashSet::new(),
            audit: ProfileAudit::default(),
        }
    }

    fn longest_unfixed(&self, partial: &Partial) -> Option<usize> {
        self.order.iter().copied().find(|&j| partial.fixed[j].is_none())
    }

    fn evaluate(
        &mut self,
        partial: Partial,
        hint: Option<&Rational>,
        decision: Option<(usize, usize)>,
    ) -> Result<Evaluated<ProfileNode, Schedule>, EngineError> {
        self.audit.nodes_solved += 1;
        let found = min_feasible_t(self.inst, &partial, hint)?;
        let mut vertex = found.vertex;
        if !fractional_jobs(&vertex).is_empty() {
            if let Some(longest) = self.longest_unfixed(&partial) {
                if fractional_jobs(&vertex).binary_search(&longest).is_err() {
                    match make_longest_fractional(self.inst, &vertex, longest, &found.t_min) {
                        Ok(v) => {
                            self.audit.transforms += 1;
                            if !uniform_vertex_check(self.inst, &partial, &v, &found.t_min) {
                                self.audit.vertex_check_failures += 1;
                            }
                            vertex = v;
                        }
                        Err(_) => self.audit.transform_fallbacks += 1,
                    }
                }
            }
        }
        let schedule = round_vertex(self.inst, &partial, &vertex, RoundRule::LstMatch).map_err(EngineError::from)?;
        if schedule.makespan > &found.t_min * &Rational::from_integer(2) {
            self.audit.lst_violations += 1;
        }
        Ok(Evaluated {
            decision,
            is_right_turn: false,
            lb: found.t_min.clone(),
            ub: schedule.makespan.clone(),
            incumbent: Some((schedule.makespan.clone(), schedule.clone())),
            payload: ProfileNode {
                partial,
                t_min: found.t_min,
                vertex,
                schedule,
            },
        })
    }
}

impl Adapter for ProfileAdapter<'_> {
    type Payload = ProfileNode;
    type Solution = Schedule;

    fn sense(&self) -> Sense {
        Sense::Minimize
    }

    fn root(&mut self) -> Result<Evaluated<ProfileNode, Schedule>, EngineError> {
        self.evaluate(Partial::root(self.inst), None, None)
    }

    fn expand(&mut self, node: &Node<ProfileNode>) -> Result<Expansion<ProfileNode, Schedule>, EngineError> {
        let data = &node.payload;
        if fractional_jobs(&data.vertex).is_empty() {
            return Ok(Expansion::Leaf);
        }
        let Some(pivot) = self.longest_unfixed(&data.partial) else {
            return Ok(Expansion::Leaf);
        };
        if self.mode == ProfileMode::Equivalent {
            if self.eps >= Rational::one() {
                return Ok(Expansion::Halt(None));
            }
            if self.inst.processing[pivot][0] < self.eps {
                self.audit.small_job_stop = true;
                return Ok(Expansion::Halt(None));
            }
        }
        let mut children = Vec::with_capacity(self.inst.m);
        for i in 0..self.inst.m {
            let partial = data.partial.fix(self.inst, pivot, i);
            children.push(self.evaluate(partial, Some(&data.t_min), Some((pivot, i)))?);
        }
        Ok(Expansion::Children(children))
    }

    fn admit(&mut self, child: &Node<ProfileNode>) -> bool {
        let partial = &child.payload.partial;
        let key = match self.mode {
            ProfileMode::Similar => match similarity_cell(&partial.overheads, &self.eps, self.inst.n) {
                Some(cell) => Key::Cell(cell),
                None => {
                    self.audit.rejected_out_of_cube += 1;
                    return false;
                }
            },
            ProfileMode::Equivalent => {
                let side = cube_side(&self.eps);
                if partial.overheads.iter().any(|c| *c > side) {
                    self.audit.rejected_out_of_cube += 1;
                    return false;
                }
                match equivalence_key(self.inst, partial, &self.eps) {
                    Ok(k) => {
                        self.audit.rounded_values.extend(k.0.iter().map(|(v, _)| v.clone()));
                        Key::Counts(k)
                    }
                    // Small fixed jobs only arise past the stopping point.
                    Err(_) => return true,
                }
            }
        };
        if self.seen.insert((child.depth, key)) {
            true
        } else {
            self.audit.rejected_duplicate += 1;
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProfileRun {
    /// Values in the original scale; schedules refer to the original jobs.
    pub result: RunResult<Schedule>,
    pub scale: Rational,
    /// Number of jobs of normalized length at least `eps`.
    pub big_jobs: usize,
    pub audit: ProfileAudit,
}

fn run_profiles(
    inst: &SchedulingInstance,
    eps: &Rational,
    mode: ProfileMode,
    node_limit: Option<usize>,
) -> Result<ProfileRun, ProfileError> {
    let (norm, scale) = normalize(inst)?;
    let big_jobs = (0..norm.n).filter(|&j| norm.processing[j][0] >= *eps).count();
    let mut adapter = ProfileAdapter::new(&norm, eps.clone(), mode);
    let mut cfg = RunConfig::new(Selection::BestFirst, StopRule::Epsilon(eps.clone()));
    cfg.node_limit = node_limit;
    let mut result = engine::run(&mut adapter, &cfg)?;
    result.best_value = &result.best_value * &scale;
    result.global_bound = &result.global_bound * &scale;
    result.best_solution = result
        .best_solution
        .map(|s| Schedule::from_assignment(inst, s.assignment));
    Ok(ProfileRun {
        result,
        scale,
        big_jobs,
        audit: adapter.audit,
    })
}

/// Similar-profile scheme for uniform machines, `0 < eps < 1`.
pub fn solve_similar(inst: &SchedulingInstance, eps: &Rational, node_limit: Option<usize>) -> Result<ProfileRun, ProfileError> {
    if !eps.is_positive() || *eps >= Rational::one() {
        return Err(ProfileError::BadEpsilon(eps.clone()));
    }
    run_profiles(inst, eps, ProfileMode::Similar, node_limit)
}

/// Equivalent-profile scheme for identical machines. For `eps >= 1` the
/// root rounding is returned.
pub fn solve_equivalent(
    inst: &SchedulingInstance,
    eps: &Rational,
    node_limit: Option<usize>,
) -> Result<ProfileRun, ProfileError> {
    if !eps.is_positive() {
        return Err(ProfileError::BadEpsilon(eps.clone()));
    }
    if inst.model != MachineModel::Identical {
        return Err(ProfileError::WrongModel(inst.model));
    }
    run_profiles(inst, eps, ProfileMode::Equivalent, node_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn normalization() {
        let inst = SchedulingInstance::identical_from_integers(&[3, 3, 2], 2).unwrap();
        let (norm, scale) = normalize(&inst).unwrap();
        assert_eq!(scale, r(4));
        assert_eq!(norm.base_times.clone().unwrap(), vec![q(3, 4), q(3, 4), q(1, 2)]);
        let root = min_feasible_t(&norm, &Partial::root(&norm), None).unwrap();
        assert_eq!(root.t_min, r(1));
        let (again, s2) = normalize(&norm).unwrap();
        assert_eq!(s2, r(1));
        assert_eq!(again, norm);
    }

    #[test]
    fn rejects_unrelated_and_empty() {
        let u = SchedulingInstance::unrelated_from_integers(&[vec![1, 2]]).unwrap();
        assert!(matches!(normalize(&u), Err(ProfileError::WrongModel(_))));
        let e = SchedulingInstance::identical_from_integers(&[], 2).unwrap();
        assert!(matches!(normalize(&e), Err(ProfileError::Empty)));
    }

    #[test]
    fn cells() {
        assert_eq!(
            similarity_cell(&[r(1), q(11, 10)], &q(1, 2), 4),
            Some(vec![BigInt::from(8), BigInt::from(8)])
        );
        let eps = q(1, 2);
        let far = &r(3) * &(&(&r(1) + &eps) * &(&r(1) + &eps));
        assert_eq!(similarity_cell(&[r(0), far], &eps, 4), None);
    }

    #[test]
    fn geometric_rounding() {
        assert_eq!(round_geo(&r(1), &q(1, 2)), Some(q(3, 4)));
        assert_eq!(round_geo(&q(1, 2), &q(1, 2)), Some(q(1, 2)));
        assert_eq!(round_geo(&q(1, 3), &q(1, 2)), None);
        let eps = q(1, 4);
        let g = &r(1) + &eps;
        let mut x = eps.clone();
        while x <= cube_side(&eps) {
            let v = round_geo(&x, &eps).unwrap();
            assert!(v <= x && x < &g * &v);
            x = &x + &q(1, 7);
        }
    }

    #[test]
    fn keys_ignore_machine_order() {
        let inst = SchedulingInstance::identical_from_integers(&[2, 1], 2).unwrap();
        let root = Partial::root(&inst);
        let a = root.fix(&inst, 0, 0).fix(&inst, 1, 1);
        let b = root.fix(&inst, 0, 1).fix(&inst, 1, 0);
        let eps = q(1, 2);
        assert_eq!(equivalence_key(&inst, &a, &eps), equivalence_key(&inst, &b, &eps));
        assert_eq!(equivalence_key(&inst, &a, &eps).unwrap().machines(), 2);
        let small = SchedulingInstance::identical_from_integers(&[1], 2).unwrap();
        let p = Partial::root(&small).fix(&small, 0, 0);
        assert_eq!(equivalence_key(&small, &p, &r(2)), Err(SmallJob(0)));
    }

    #[test]
    fn value_bound() {
        assert!((rounded_value_bound(1.0) - 8.0).abs() < 1e-9);
        assert!(rounded_value_bound(0.5) > 300.0);
    }

    #[test]
    fn transform_keeps_loads() {
        // job 0 (longest) integral on machine 0, job 1 split
        let inst = SchedulingInstance::identical_from_integers(&[4, 2, 3], 2).unwrap();
        let root = Partial::root(&inst);
        let z = r(0);
        let x = vec![
            vec![r(1), z.clone()],
            vec![q(1, 2), q(1, 2)],
            vec![z.clone(), r(1)],
        ];
        let t = r(5);
        let y = make_longest_fractional(&inst, &x, 0, &t).unwrap();
        assert_eq!(completion_times(&inst, &root, &x), completion_times(&inst, &root, &y));
        assert!(fractional_jobs(&y).contains(&0));
        assert!(!fractional_jobs(&y).contains(&1));
        assert!(uniform_vertex_check(&inst, &root, &y, &t));
        assert_eq!(make_longest_fractional(&inst, &y, 0, &t).unwrap(), y);
        let integral = vec![vec![r(1), z.clone()], vec![r(1), z.clone()], vec![z, r(1)]];
        assert_eq!(make_longest_fractional(&inst, &integral, 0, &t), Err(TransformError::Integral));
    }

    #[test]
    fn averaged_vertices_fail_check() {
        let inst = SchedulingInstance::identical_from_integers(&[2, 2], 2).unwrap();
        let root = Partial::root(&inst);
        let z = r(0);
        let a = vec![vec![r(1), z.clone()], vec![z.clone(), r(1)]];
        let b = vec![vec![z.clone(), r(1)], vec![r(1), z]];
        let half = q(1, 2);
        let mid: Vec<Vec<Rational>> = a
            .iter()
            .zip(&b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(u, v)| &(u + v) * &half).collect())
            .collect();
        assert!(uniform_vertex_check(&inst, &root, &a, &r(2)));
        assert!(!uniform_vertex_check(&inst, &root, &mid, &r(2)));
    }

    #[test]
    fn worked_runs() {
        let inst = SchedulingInstance::identical_from_integers(&[3, 3, 2], 2).unwrap();
        let run = solve_equivalent(&inst, &q(1, 2), None).unwrap();
        assert!(run.result.best_value <= &r(5) * &q(9, 4));
        assert!(run.result.best_solution.unwrap().is_consistent(&inst));
        let run = solve_equivalent(&inst, &r(1), None).unwrap();
        assert_eq!(run.result.nodes_explored, 1);
        let uni = SchedulingInstance::uniform_from_integers(&[7, 5, 4, 3], &[1, 2]).unwrap();
        let run = solve_similar(&uni, &q(1, 4), None).unwrap();
        assert!(run.result.best_solution.unwrap().is_consistent(&uni));
        assert_eq!(run.audit.vertex_check_failures, 0);
        assert!(matches!(solve_similar(&uni, &r(1), None), Err(ProfileError::BadEpsilon(_))));
    }
}
