//! Multiple knapsack: surrogate relaxation solved greedily in ratio order,
//! critical items, the `(m+1)`-approximate rounding and the best-first
//! scheme built on them.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{
    self, Adapter, BranchRule, EngineError, Evaluated, Expansion, Node, RunConfig, RunResult, Selection, Sense,
    StopRule,
};
use crate::instance::KnapsackInstance;
use crate::lp::LinearProgram;
use crate::rational::Rational;

/// Optimal solution of the LP relaxation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FracKnapSolution {
    /// `(item, knapsack) -> fraction`, zero entries omitted.
    pub x_star: BTreeMap<(usize, usize), Rational>,
    pub sub_value: Rational,
    /// Fractionally packed items in greedy order.
    pub critical_items: Vec<usize>,
    /// Most profitable critical item.
    pub j_star: Option<usize>,
}

/// Integral assignment; `assignment[j]` is the knapsack of item `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntKnapSolution {
    pub assignment: Vec<Option<usize>>,
    pub value: Rational,
}

impl IntKnapSolution {
    pub fn empty(n: usize) -> Self {
        IntKnapSolution {
            assignment: vec![None; n],
            value: Rational::zero(),
        }
    }

    pub fn is_feasible(&self, inst: &KnapsackInstance) -> bool {
        if self.assignment.len() != inst.n {
            return false;
        }
        let mut load = vec![Rational::zero(); inst.m];
        let mut value = Rational::zero();
        for (j, a) in self.assignment.iter().enumerate() {
            if let Some(i) = *a {
                if i >= inst.m {
                    return false;
                }
                load[i] += &inst.weights[j];
                value += &inst.profits[j];
            }
        }
        value == self.value && load.iter().zip(&inst.capacities).all(|(l, c)| l <= c)
    }
}

/// Compares unit profits `p_a / w_a` and `p_b / w_b` by cross-multiplying.
/// Zero weights rank above everything.
fn compare_ratio(pa: &Rational, wa: &Rational, pb: &Rational, wb: &Rational) -> Ordering {
    match (wa.is_zero(), wb.is_zero()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => (pa * wb).cmp(&(pb * wa)),
    }
}

/// Item indices by decreasing unit profit, ties to the lower index.
pub fn ratio_order(inst: &KnapsackInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.n).collect();
    order.sort_by(|&a, &b| {
        compare_ratio(&inst.profits[b], &inst.weights[b], &inst.profits[a], &inst.weights[a]).then(a.cmp(&b))
    });
    order
}

/// Residual problem at a tree node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subproblem {
    pub capacities: Vec<Rational>,
    /// Free items in ratio order.
    pub items: Vec<usize>,
    /// `(item, knapsack)` inclusions on the path from the root.
    pub fixed: Vec<(usize, usize)>,
    pub fixed_profit: Rational,
}

/// A subproblem together with its relaxation and rounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolvedNode {
    pub sub: Subproblem,
    pub frac: FracKnapSolution,
    /// Rounding of the free part only.
    pub rounded: IntKnapSolution,
}

impl SolvedNode {
    pub fn upper_bound(&self) -> Rational {
        &self.frac.sub_value + &self.sub.fixed_profit
    }

    pub fn lower_bound(&self) -> Rational {
        &self.rounded.value + &self.sub.fixed_profit
    }

    /// Rounding plus the fixed items, as a solution of the full instance.
    pub fn full_solution(&self) -> IntKnapSolution {
        let mut sol = self.rounded.clone();
        for &(j, i) in &self.sub.fixed {
            sol.assignment[j] = Some(i);
        }
        sol.value = self.lower_bound();
        sol
    }

    /// `value(x') >= sub_value / (m+1)`.
    pub fn rounding_bound_holds(&self) -> bool {
        let m = self.sub.capacities.len() as i64;
        &self.rounded.value * &Rational::from_integer(m + 1) >= self.frac.sub_value
    }

    /// `p_{j*} / sub >= min{1/(m+1), (1 - value(x')/sub) / m}`, in
    /// cross-multiplied form; vacuous when there is no critical item.
    pub fn critical_item_bound_holds(&self, profits: &[Rational]) -> bool {
        let Some(j) = self.frac.j_star else {
            return true;
        };
        let m = Rational::from_integer(self.sub.capacities.len() as i64);
        let sub = &self.frac.sub_value;
        let p = &profits[j];
        let first = p * &(&m + &Rational::one()) >= *sub;
        let second = p * &m >= sub - &self.rounded.value;
        first || second
    }
}

/// Sorted view of a knapsack instance used by all node computations.
#[derive(Debug, Clone)]
pub struct KnapsackModel<'a> {
    pub inst: &'a KnapsackInstance,
    order: Vec<usize>,
}

impl<'a> KnapsackModel<'a> {
    pub fn new(inst: &'a KnapsackInstance) -> Self {
        KnapsackModel {
            inst,
            order: ratio_order(inst),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn root(&self) -> Subproblem {
        Subproblem {
            capacities: self.inst.capacities.clone(),
            items: self.order.clone(),
            fixed: Vec::new(),
            fixed_profit: Rational::zero(),
        }
    }

    /// Drops items heavier than every residual capacity; they can never be
    /// packed in this subtree.
    pub fn drop_unusable(&self, sub: &mut Subproblem) {
        let Some(cmax) = sub.capacities.iter().max().cloned() else {
            sub.items.clear();
            return;
        };
        sub.items.retain(|&j| self.inst.weights[j] <= cmax);
    }

    /// Greedy fill in ratio order with cut-and-carry between knapsacks,
    /// followed by the best of the critical items and the integral part.
    pub fn solve(&self, sub: Subproblem) -> SolvedNode {
        let w = &self.inst.weights;
        let p = &self.inst.profits;
        let m = sub.capacities.len();
        let mut x_star = BTreeMap::new();
        let mut floor = IntKnapSolution::empty(self.inst.n);
        let mut sub_value = Rational::zero();
        let mut critical: Vec<usize> = Vec::new();
        let mut k = 0usize;
        let mut room = sub.capacities.first().cloned().unwrap_or_default();

        for &j in &sub.items {
            if w[j].is_zero() {
                if m > 0 {
                    x_star.insert((j, 0), Rational::one());
                    floor.assignment[j] = Some(0);
                    floor.value += &p[j];
                    sub_value += &p[j];
                }
                continue;
            }
            if k == m {
                continue;
            }
            let mut need = w[j].clone();
            let mut pieces = 0usize;
            while !need.is_zero() && k < m {
                if room >= need {
                    *x_star.entry((j, k)).or_insert_with(Rational::zero) += &need / &w[j];
                    room -= &need;
                    need = Rational::zero();
                    pieces += 1;
                } else {
                    if !room.is_zero() {
                        *x_star.entry((j, k)).or_insert_with(Rational::zero) += &room / &w[j];
                        need -= &room;
                        pieces += 1;
                    }
                    k += 1;
                    room = sub.capacities.get(k).cloned().unwrap_or_default();
                }
            }
            let placed = &w[j] - &need;
            sub_value += &p[j] * &(&placed / &w[j]);
            if pieces == 1 && need.is_zero() {
                floor.assignment[j] = Some(k);
                floor.value += &p[j];
            } else if pieces > 0 {
                critical.push(j);
            }
        }
        let free_profit: Rational = sub
            .items
            .iter()
            .filter(|&&j| w[j].is_zero() && m > 0)
            .map(|&j| &p[j])
            .sum();

        let mut rounded = floor;
        for &s in &critical {
            let Some(i) = (0..m).find(|&i| w[s] <= sub.capacities[i]) else {
                continue;
            };
            let value = &p[s] + &free_profit;
            if value > rounded.value {
                let mut chi = IntKnapSolution::empty(self.inst.n);
                for &j in &sub.items {
                    if w[j].is_zero() {
                        chi.assignment[j] = Some(0);
                    }
                }
                chi.assignment[s] = Some(i);
                chi.value = value;
                rounded = chi;
            }
        }
        let j_star = critical.iter().copied().reduce(|a, b| if p[b] > p[a] { b } else { a });
        SolvedNode {
            sub,
            frac: FracKnapSolution {
                x_star,
                sub_value,
                critical_items: critical,
                j_star,
            },
            rounded,
        }
    }

    /// Drops unusable items, then solves.
    pub fn solve_usable(&self, mut sub: Subproblem) -> SolvedNode {
        self.drop_unusable(&mut sub);
        self.solve(sub)
    }

    /// Branching item under `rule`, or `None` when the relaxation is integral.
    pub fn pivot(&self, node: &SolvedNode, rule: BranchRule) -> Option<usize> {
        if node.frac.critical_items.is_empty() {
            return None;
        }
        match rule {
            BranchRule::Ce => node.frac.j_star,
            BranchRule::Ppw => node.frac.critical_items.first().copied(),
            BranchRule::K => node.sub.items.first().copied(),
            BranchRule::Mmp => None,
        }
    }

    /// Children of `node` on `pivot`: one inclusion per knapsack that can
    /// hold it, then the exclusion. Entries are `(knapsack or m, subproblem)`.
    pub fn branch_children(&self, node: &SolvedNode, pivot: usize) -> Vec<(usize, Subproblem)> {
        let m = node.sub.capacities.len();
        let w = &self.inst.weights[pivot];
        let mut rest = node.sub.clone();
        rest.items.retain(|&j| j != pivot);
        let mut out = Vec::with_capacity(m + 1);
        for i in 0..m {
            if *w > node.sub.capacities[i] {
                continue;
            }
            let mut child = rest.clone();
            child.capacities[i] -= w;
            child.fixed.push((pivot, i));
            child.fixed_profit += &self.inst.profits[pivot];
            out.push((i, child));
        }
        out.push((m, rest));
        out
    }
}

/// Relaxation and rounding of the whole instance, without dropping items.
pub fn dantzig_solve(inst: &KnapsackInstance) -> (FracKnapSolution, IntKnapSolution) {
    let model = KnapsackModel::new(inst);
    let solved = model.solve(model.root());
    (solved.frac, solved.rounded)
}

/// The LP relaxation over variables `x[j*m + i]`: each item packed at most
/// once in total, each knapsack within capacity.
pub fn relaxation_lp(inst: &KnapsackInstance) -> LinearProgram {
    let (n, m) = (inst.n, inst.m);
    let mut lp = LinearProgram::new(n * m);
    for j in 0..n {
        lp.add_le((0..m).map(|i| (j * m + i, Rational::one())).collect(), Rational::one());
    }
    for i in 0..m {
        lp.add_le(
            (0..n).map(|j| (j * m + i, inst.weights[j].clone())).collect(),
            inst.capacities[i].clone(),
        );
    }
    lp
}

/// Objective of [`relaxation_lp`] at `x`.
pub fn relaxation_objective(inst: &KnapsackInstance, x: &[Rational]) -> Rational {
    x.iter().enumerate().map(|(v, xv)| xv * &inst.profits[v / inst.m]).sum()
}

/// Per-node checks of the rounding guarantees, accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnapsackAudit {
    pub nodes_solved: usize,
    pub rounding_violations: usize,
    pub critical_item_violations: usize,
}

impl KnapsackAudit {
    fn record(&mut self, node: &SolvedNode, profits: &[Rational]) {
        self.nodes_solved += 1;
        if !node.rounding_bound_holds() {
            self.rounding_violations += 1;
        }
        if !node.critical_item_bound_holds(profits) {
            self.critical_item_violations += 1;
        }
    }
}

pub struct KnapsackAdapter<'a> {
    model: KnapsackModel<'a>,
    rule: BranchRule,
    pub audit: KnapsackAudit,
}

impl<'a> KnapsackAdapter<'a> {
    pub fn new(inst: &'a KnapsackInstance, rule: BranchRule) -> Self {
        KnapsackAdapter {
            model: KnapsackModel::new(inst),
            rule,
            audit: KnapsackAudit::default(),
        }
    }

    fn evaluate(&mut self, sub: Subproblem, decision: Option<(usize, usize)>, right: bool) -> Evaluated<SolvedNode, IntKnapSolution> {
        let solved = self.model.solve_usable(sub);
        self.audit.record(&solved, &self.model.inst.profits);
        Evaluated {
            decision,
            is_right_turn: right,
            lb: solved.lower_bound(),
            ub: solved.upper_bound(),
            incumbent: Some((solved.lower_bound(), solved.full_solution())),
            payload: solved,
        }
    }
}

impl Adapter for KnapsackAdapter<'_> {
    type Payload = SolvedNode;
    type Solution = IntKnapSolution;

    fn sense(&self) -> Sense {
        Sense::Maximize
    }

    fn root(&mut self) -> Result<Evaluated<SolvedNode, IntKnapSolution>, EngineError> {
        let root = self.model.root();
        Ok(self.evaluate(root, None, false))
    }

    fn expand(&mut self, node: &Node<SolvedNode>) -> Result<Expansion<SolvedNode, IntKnapSolution>, EngineError> {
        let Some(pivot) = self.model.pivot(&node.payload, self.rule) else {
            return Ok(Expansion::Leaf);
        };
        let m = node.payload.sub.capacities.len();
        let children = self.model.branch_children(&node.payload, pivot);
        Ok(Expansion::Children(
            children
                .into_iter()
                .map(|(target, sub)| self.evaluate(sub, Some((pivot, target)), target == m))
                .collect(),
        ))
    }

    fn tracks_left_turns(&self) -> bool {
        true
    }
}

/// `1 + max{m*alpha/(1-alpha)^2, (m+1)/(1-alpha)}`: bound on left turns
/// along any root-leaf path under best-first search with the CE rule.
pub fn left_turn_bound(alpha: &Rational, m: usize) -> Rational {
    let m = Rational::from_integer(m as i64);
    let gap = Rational::one() - alpha;
    let a = &(&m * alpha) / &(&gap * &gap);
    let b = &(&m + &Rational::one()) / &gap;
    Rational::one() + a.max(b)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KnapsackError {
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    BadAlpha(Rational),
    #[error("branching rule {0:?} does not apply to knapsack")]
    BadRule(BranchRule),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct KnapsackRun {
    pub result: RunResult<IntKnapSolution>,
    pub audit: KnapsackAudit,
}

/// Runs the scheme with the given selection and branching rule.
pub fn solve(
    inst: &KnapsackInstance,
    alpha: &Rational,
    selection: Selection,
    rule: BranchRule,
    node_limit: Option<usize>,
) -> Result<KnapsackRun, KnapsackError> {
    if !alpha.is_positive() || *alpha >= Rational::one() {
        return Err(KnapsackError::BadAlpha(alpha.clone()));
    }
    if rule == BranchRule::Mmp {
        return Err(KnapsackError::BadRule(rule));
    }
    let mut adapter = KnapsackAdapter::new(inst, rule);
    let mut cfg = RunConfig::new(selection, StopRule::Alpha(alpha.clone()));
    cfg.node_limit = node_limit;
    let mut result = engine::run(&mut adapter, &cfg)?;
    if result.best_solution.is_none() {
        result.best_solution = Some(IntKnapSolution::empty(inst.n));
    }
    Ok(KnapsackRun {
        result,
        audit: adapter.audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    fn worked() -> KnapsackInstance {
        KnapsackInstance::from_integers(&[5, 5], &[6, 5, 4], &[60, 40, 20]).unwrap()
    }

    #[test]
    fn worked_relaxation() {
        let inst = worked();
        let (frac, int) = dantzig_solve(&inst);
        assert_eq!(frac.sub_value, r(92));
        assert_eq!(frac.x_star[&(0, 0)], q(5, 6));
        assert_eq!(frac.x_star[&(0, 1)], q(1, 6));
        assert_eq!(frac.x_star[&(1, 1)], q(4, 5));
        assert_eq!(frac.critical_items, vec![0, 1]);
        assert_eq!(frac.j_star, Some(0));
        // item 0 fits no knapsack on its own, so the rounding is item 1 alone
        assert_eq!(int.value, r(40));
        assert!(int.is_feasible(&inst));
        assert!(&int.value * &r(3) >= frac.sub_value);
    }

    #[test]
    fn worked_branching_keeps_only_exclusion() {
        let inst = worked();
        let model = KnapsackModel::new(&inst);
        let root = model.solve(model.root());
        let pivot = model.pivot(&root, BranchRule::Ce).unwrap();
        assert_eq!(pivot, 0);
        let kids = model.branch_children(&root, pivot);
        assert_eq!(kids.len(), 1);
        assert_eq!(kids[0].0, 2);
        assert_eq!(kids[0].1.items, vec![1, 2]);
    }

    #[test]
    fn worked_run_stops_at_root() {
        let inst = worked();
        let run = solve(&inst, &q(1, 2), Selection::BestFirst, BranchRule::Ce, None).unwrap();
        assert_eq!(run.result.nodes_explored, 1);
        assert_eq!(run.result.best_value, r(60));
        assert!(run.result.best_solution.unwrap().is_feasible(&inst));
    }

    #[test]
    fn single_fitting_item_is_integral() {
        let inst = KnapsackInstance::from_integers(&[10], &[3], &[7]).unwrap();
        let (frac, int) = dantzig_solve(&inst);
        assert!(frac.critical_items.is_empty());
        assert_eq!(frac.j_star, None);
        assert_eq!(int.value, r(7));
        assert_eq!(frac.sub_value, r(7));
    }

    #[test]
    fn everything_too_heavy() {
        let inst = KnapsackInstance::from_integers(&[2, 3], &[7, 9], &[10, 30]).unwrap();
        let (frac, int) = dantzig_solve(&inst);
        // ratios 30/9 > 10/7: item 1 first, 5 of its 9 units fit
        assert_eq!(frac.sub_value, q(150, 9));
        assert_eq!(frac.critical_items, vec![1]);
        assert_eq!(int.value, r(0));
    }

    #[test]
    fn ppw_and_ce_can_differ() {
        // item 0 has the best ratio and is critical for knapsack 0, item 2
        // is critical for knapsack 1 and more profitable
        let inst = KnapsackInstance::from_integers(&[4, 10], &[5, 4, 10], &[50, 30, 70]).unwrap();
        let model = KnapsackModel::new(&inst);
        let root = model.solve(model.root());
        assert_eq!(root.frac.critical_items, vec![0, 2]);
        assert_eq!(model.pivot(&root, BranchRule::Ppw), Some(0));
        assert_eq!(model.pivot(&root, BranchRule::Ce), Some(2));
        assert_eq!(model.pivot(&root, BranchRule::K), Some(0));
    }

    #[test]
    fn zero_weight_items_are_free() {
        let inst = KnapsackInstance::from_integers(&[3], &[0, 4], &[5, 8]).unwrap();
        let (frac, int) = dantzig_solve(&inst);
        assert_eq!(frac.sub_value, r(11));
        assert_eq!(int.value, r(5));
        assert!(int.is_feasible(&inst));
    }

    #[test]
    fn left_turn_constant() {
        assert_eq!(left_turn_bound(&q(97, 100), 5), q(48509, 9));
        assert!(q(5389901, 1000) > left_turn_bound(&q(97, 100), 5));
        // m = 1, alpha = 1/2: max{2, 4} + 1
        assert_eq!(left_turn_bound(&q(1, 2), 1), r(5));
    }

    #[test]
    fn rejects_bad_parameters() {
        let inst = worked();
        assert!(matches!(
            solve(&inst, &r(1), Selection::Dfs, BranchRule::Ce, None),
            Err(KnapsackError::BadAlpha(_))
        ));
        assert!(matches!(
            solve(&inst, &q(1, 2), Selection::Dfs, BranchRule::Mmp, None),
            Err(KnapsackError::BadRule(_))
        ));
    }

    use crate::lp::enumerate_vertices;
    use proptest::prelude::*;

    fn small_instance() -> impl Strategy<Value = KnapsackInstance> {
        (1usize..=2, 1usize..=4).prop_flat_map(|(m, n)| {
            (
                proptest::collection::vec(1i64..=12, m),
                proptest::collection::vec(1i64..=10, n),
                proptest::collection::vec(1i64..=20, n),
            )
                .prop_map(|(c, w, p)| KnapsackInstance::from_integers(&c, &w, &p).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn relaxation_matches_vertex_optimum(inst in small_instance()) {
            let (frac, int) = dantzig_solve(&inst);
            let lp = relaxation_lp(&inst);
            let verts = enumerate_vertices(&lp, 100_000).unwrap();
            let best = verts.iter().map(|x| relaxation_objective(&inst, x)).max().unwrap();
            prop_assert_eq!(frac.sub_value, best);
            prop_assert!(int.is_feasible(&inst));
        }

        #[test]
        fn guarantees_hold_at_every_node(inst in small_instance(), rule in 0usize..3) {
            let rule = [BranchRule::Ce, BranchRule::Ppw, BranchRule::K][rule];
            let run = solve(&inst, &q(1, 2), Selection::BestFirst, rule, None).unwrap();
            prop_assert_eq!(run.audit.rounding_violations, 0);
            prop_assert_eq!(run.audit.critical_item_violations, 0);
            let sol = run.result.best_solution.unwrap();
            prop_assert!(sol.is_feasible(&inst));
            prop_assert!(&sol.value * &Rational::from_integer(2) >= run.result.global_bound);
        }
    }
}
