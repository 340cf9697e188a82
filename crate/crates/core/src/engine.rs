//! Generic branch-and-bound loop.
//!
//! An [`Adapter`] evaluates the root and branches nodes; [`run`] owns the
//! frontier, the incumbent, pruning, stopping and metrics. One run is
//! sequential: selection order determines the result.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Selection {
    Dfs,
    Bfs,
    /// Highest upper bound when maximizing, lowest lower bound when minimizing.
    BestFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BranchRule {
    /// Most profitable critical item.
    Ce,
    /// Fractional item with the largest profit-to-weight ratio.
    Ppw,
    /// Unfixed item with the largest profit-to-weight ratio.
    K,
    /// Fractional job whose shortest processing time is largest.
    Mmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundRule {
    /// Binary search over the eligibility-restricted LP.
    Bs,
    /// Plain makespan LP relaxation.
    Lr,
    /// Surrogate knapsack relaxation.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoundRule {
    /// Each fractional job to its fastest machine.
    As,
    /// Best placement of the fractional jobs, by exhaustive search.
    Bm,
    /// Fractional jobs along a job-to-machine matching.
    LstMatch,
    /// Best of the critical items and the integral part.
    Dantzig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemFamily {
    Knapsack,
    Scheduling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Strategy {
    pub selection: Selection,
    pub branching: BranchRule,
    pub bounding: BoundRule,
    pub rounding: RoundRule,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid strategy {strategy} for {family:?}")]
pub struct StrategyError {
    pub strategy: String,
    pub family: ProblemFamily,
}

impl Strategy {
    pub fn knapsack(selection: Selection, branching: BranchRule) -> Self {
        Strategy {
            selection,
            branching,
            bounding: BoundRule::Surrogate,
            rounding: RoundRule::Dantzig,
        }
    }

    pub fn scheduling(selection: Selection, bounding: BoundRule, rounding: RoundRule) -> Self {
        Strategy {
            selection,
            branching: BranchRule::Mmp,
            bounding,
            rounding,
        }
    }

    pub fn validate(&self, family: ProblemFamily) -> Result<(), StrategyError> {
        let ok = match family {
            ProblemFamily::Knapsack => {
                matches!(self.branching, BranchRule::Ce | BranchRule::Ppw | BranchRule::K)
                    && self.bounding == BoundRule::Surrogate
                    && self.rounding == RoundRule::Dantzig
            }
            ProblemFamily::Scheduling => {
                self.branching == BranchRule::Mmp
                    && matches!(self.bounding, BoundRule::Bs | BoundRule::Lr)
                    && matches!(self.rounding, RoundRule::As | RoundRule::Bm | RoundRule::LstMatch)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(StrategyError {
                strategy: self.to_string(),
                family,
            })
        }
    }

    /// Short tags as used in result tables, e.g. `HUB/CE` or `LLB/BS/AS`.
    pub fn selection_tag(&self, sense: Sense) -> &'static str {
        match (self.selection, sense) {
            (Selection::Dfs, _) => "DFS",
            (Selection::Bfs, _) => "BFS",
            (Selection::BestFirst, Sense::Maximize) => "HUB",
            (Selection::BestFirst, Sense::Minimize) => "LLB",
        }
    }

    pub fn branching_tag(&self) -> &'static str {
        match self.branching {
            BranchRule::Ce => "CE",
            BranchRule::Ppw => "PPW",
            BranchRule::K => "K",
            BranchRule::Mmp => "MMP",
        }
    }

    pub fn bounding_tag(&self) -> &'static str {
        match self.bounding {
            BoundRule::Bs => "BS",
            BoundRule::Lr => "LR",
            BoundRule::Surrogate => "SUR",
        }
    }

    pub fn rounding_tag(&self) -> &'static str {
        match self.rounding {
            RoundRule::As => "AS",
            RoundRule::Bm => "BM",
            RoundRule::LstMatch => "LST",
            RoundRule::Dantzig => "DZ",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sense = match self.bounding {
            BoundRule::Surrogate => Sense::Maximize,
            _ => Sense::Minimize,
        };
        write!(
            f,
            "{}/{}/{}/{}",
            self.selection_tag(sense),
            self.branching_tag(),
            self.bounding_tag(),
            self.rounding_tag()
        )
    }
}

/// Stopping criterion on `best / bound`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Maximization: stop once `best / bound >= alpha`.
    Alpha(Rational),
    /// Minimization: stop once `best / bound <= 1 + eps`.
    Epsilon(Rational),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("global bound is zero")]
    ZeroBound,
    #[error("stop rule {rule:?} does not match {sense:?}")]
    RuleMismatch { rule: StopRule, sense: Sense },
    #[error("bound monotonicity violated: node {child} (bound {child_bound}) under node {parent} (bound {parent_bound})")]
    Monotonicity {
        parent: u64,
        child: u64,
        parent_bound: Rational,
        child_bound: Rational,
    },
    #[error("node {id}: lower bound {lb} exceeds upper bound {ub}")]
    InvertedBounds { id: u64, lb: Rational, ub: Rational },
    #[error("empty frontier")]
    EmptyFrontier,
    #[error("adapter failure: {0}")]
    Adapter(String),
}

/// Pure stopping test with exact comparison.
pub fn should_stop(best: &Rational, bound: &Rational, rule: &StopRule, sense: Sense) -> Result<bool, EngineError> {
    if bound.is_zero() {
        return Err(EngineError::ZeroBound);
    }
    match (rule, sense) {
        (StopRule::Alpha(alpha), Sense::Maximize) => Ok(best / bound >= *alpha),
        (StopRule::Epsilon(eps), Sense::Minimize) => Ok(best / bound <= Rational::one() + eps),
        _ => Err(EngineError::RuleMismatch {
            rule: rule.clone(),
            sense,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node<P> {
    pub id: u64,
    pub parent: Option<u64>,
    pub depth: usize,
    /// `(item or job, target)`; for knapsack exclusions the target is `m`.
    pub decisions: Vec<(usize, usize)>,
    pub local_lb: Rational,
    pub local_ub: Rational,
    pub is_right_turn: bool,
    /// Left turns on the path from the root.
    pub left_turns: usize,
    pub payload: P,
}

/// A candidate node produced by the adapter.
#[derive(Debug, Clone)]
pub struct Evaluated<P, S> {
    pub decision: Option<(usize, usize)>,
    pub is_right_turn: bool,
    pub lb: Rational,
    pub ub: Rational,
    /// Feasible solution found while bounding, with its value.
    pub incumbent: Option<(Rational, S)>,
    pub payload: P,
}

pub enum Expansion<P, S> {
    Children(Vec<Evaluated<P, S>>),
    /// Nothing to branch on.
    Leaf,
    /// The adapter certified its answer; stop with this optional solution.
    Halt(Option<(Rational, S)>),
}

pub trait Adapter {
    type Payload: Clone;
    type Solution: Clone;

    fn sense(&self) -> Sense;

    fn root(&mut self) -> Result<Evaluated<Self::Payload, Self::Solution>, EngineError>;

    fn expand(&mut self, node: &Node<Self::Payload>) -> Result<Expansion<Self::Payload, Self::Solution>, EngineError>;

    /// Final say on inserting a child that survived bound pruning.
    fn admit(&mut self, _child: &Node<Self::Payload>) -> bool {
        true
    }

    /// Whether left turns are meaningful for this problem.
    fn tracks_left_turns(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    RatioMet,
    NodeLimit,
    FrontierEmpty,
    /// The adapter requested a stop with a certified answer.
    Halted,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::RatioMet => "ratio-met",
            Termination::NodeLimit => "node-limit",
            Termination::FrontierEmpty => "frontier-empty",
            Termination::Halted => "halted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult<S> {
    pub best_solution: Option<S>,
    pub best_value: Rational,
    pub global_bound: Rational,
    pub nodes_explored: usize,
    pub max_depth: usize,
    pub left_turn_max: Option<usize>,
    pub nodes_after_optimum: usize,
    /// Nodes inserted into the frontier, per depth.
    pub level_counts: Vec<usize>,
    /// Selected nodes left unexpanded because of the depth limit.
    pub depth_cap_hits: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub selection: Selection,
    pub stop: StopRule,
    pub node_limit: Option<usize>,
    pub depth_limit: Option<usize>,
}

impl RunConfig {
    pub fn new(selection: Selection, stop: StopRule) -> Self {
        RunConfig {
            selection,
            stop,
            node_limit: None,
            depth_limit: None,
        }
    }

    pub fn with_node_limit(mut self, limit: usize) -> Self {
        self.node_limit = Some(limit);
        self
    }

    pub fn with_depth_limit(mut self, limit: usize) -> Self {
        self.depth_limit = Some(limit);
        self
    }
}

/// Active nodes with the selection order and the bound order side by side.
pub struct Frontier<P> {
    sense: Sense,
    selection: Selection,
    nodes: HashMap<u64, Node<P>>,
    /// Key is `-ub` when maximizing and `lb` when minimizing, so the first
    /// element is both the best-first choice and the global bound.
    by_bound: BTreeSet<(Rational, u64)>,
    order: VecDeque<u64>,
}

impl<P> Frontier<P> {
    pub fn new(sense: Sense, selection: Selection) -> Self {
        Frontier {
            sense,
            selection,
            nodes: HashMap::new(),
            by_bound: BTreeSet::new(),
            order: VecDeque::new(),
        }
    }

    fn key(&self, node: &Node<P>) -> Rational {
        match self.sense {
            Sense::Maximize => -&node.local_ub,
            Sense::Minimize => node.local_lb.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn insert(&mut self, node: Node<P>) {
        self.by_bound.insert((self.key(&node), node.id));
        if self.selection != Selection::BestFirst {
            self.order.push_back(node.id);
        }
        self.nodes.insert(node.id, node);
    }

    /// Best bound over active nodes.
    pub fn bound(&self) -> Option<Rational> {
        self.by_bound.first().map(|(k, _)| match self.sense {
            Sense::Maximize => -k,
            Sense::Minimize => k.clone(),
        })
    }

    /// Removes and returns the next node. Best-first: best bound, ties to
    /// the smallest id. DFS: last inserted. BFS: first inserted.
    pub fn select_next(&mut self) -> Option<Node<P>> {
        let id = match self.selection {
            Selection::BestFirst => self.by_bound.first()?.1,
            Selection::Dfs => self.order.pop_back()?,
            Selection::Bfs => self.order.pop_front()?,
        };
        let node = self.nodes.remove(&id).expect("ordered ids are active");
        let key = self.key(&node);
        self.by_bound.remove(&(key, id));
        Some(node)
    }
}

/// Whether a bound can no longer beat the incumbent.
fn dominated(sense: Sense, lb: &Rational, ub: &Rational, incumbent: &Option<Rational>) -> bool {
    match (incumbent, sense) {
        (None, _) => false,
        (Some(best), Sense::Maximize) => ub <= best,
        (Some(best), Sense::Minimize) => lb >= best,
    }
}

struct Incumbent<S> {
    value: Option<Rational>,
    solution: Option<S>,
    found_at: usize,
}

impl<S> Incumbent<S> {
    fn offer(&mut self, sense: Sense, value: Rational, solution: S, explored: usize) {
        let better = match (&self.value, sense) {
            (None, _) => true,
            (Some(v), Sense::Maximize) => value > *v,
            (Some(v), Sense::Minimize) => value < *v,
        };
        if better {
            self.value = Some(value);
            self.solution = Some(solution);
            self.found_at = explored;
        }
    }
}

pub fn run<A: Adapter>(adapter: &mut A, cfg: &RunConfig) -> Result<RunResult<A::Solution>, EngineError> {
    let sense = adapter.sense();
    match (&cfg.stop, sense) {
        (StopRule::Alpha(_), Sense::Maximize) | (StopRule::Epsilon(_), Sense::Minimize) => {}
        _ => {
            return Err(EngineError::RuleMismatch {
                rule: cfg.stop.clone(),
                sense,
            })
        }
    }
    let track_turns = adapter.tracks_left_turns();
    let mut frontier: Frontier<A::Payload> = Frontier::new(sense, cfg.selection);
    let mut incumbent: Incumbent<A::Solution> = Incumbent {
        value: None,
        solution: None,
        found_at: 0,
    };
    let mut next_id: u64 = 0;
    let mut max_depth = 0usize;
    let mut left_turn_max = 0usize;
    let mut level_counts = vec![0usize];
    let mut depth_cap_hits = 0usize;

    let root = adapter.root()?;
    check_bounds(0, &root.lb, &root.ub)?;
    // The root counts as explored once evaluated.
    let mut explored = 1usize;
    if let Some((v, s)) = root.incumbent {
        incumbent.offer(sense, v, s, explored);
    }
    let root_node = Node {
        id: next_id,
        parent: None,
        depth: 0,
        decisions: Vec::new(),
        local_lb: root.lb,
        local_ub: root.ub,
        is_right_turn: false,
        left_turns: 0,
        payload: root.payload,
    };
    next_id += 1;
    level_counts[0] = 1;
    let mut current_bound = match sense {
        Sense::Maximize => root_node.local_ub.clone(),
        Sense::Minimize => root_node.local_lb.clone(),
    };
    frontier.insert(root_node);

    let finish = |termination: Termination,
                  incumbent: Incumbent<A::Solution>,
                  bound: Rational,
                  explored: usize,
                  max_depth: usize,
                  left_turn_max: usize,
                  level_counts: Vec<usize>,
                  depth_cap_hits: usize| RunResult {
        global_bound: match (&incumbent.value, sense) {
            (Some(v), Sense::Maximize) if *v > bound => v.clone(),
            (Some(v), Sense::Minimize) if *v < bound => v.clone(),
            _ => bound,
        },
        best_value: incumbent.value.clone().unwrap_or_default(),
        best_solution: incumbent.solution,
        nodes_explored: explored,
        max_depth,
        left_turn_max: track_turns.then_some(left_turn_max),
        nodes_after_optimum: explored.saturating_sub(incumbent.found_at),
        level_counts,
        depth_cap_hits,
        termination,
    };

    let mut first = true;
    loop {
        if !first {
            match frontier.bound() {
                None => {
                    let bound = incumbent.value.clone().unwrap_or_default();
                    return Ok(finish(
                        Termination::FrontierEmpty,
                        incumbent,
                        bound,
                        explored,
                        max_depth,
                        left_turn_max,
                        level_counts,
                        depth_cap_hits,
                    ));
                }
                Some(b) => current_bound = b,
            }
        }
        if let Some(best) = &incumbent.value {
            // A bound strictly behind the incumbent means every active node is dominated.
            let exhausted = match sense {
                Sense::Maximize => current_bound < *best,
                Sense::Minimize => current_bound > *best,
            };
            let stop = !exhausted
                && match should_stop(best, &current_bound, &cfg.stop, sense) {
                    Ok(s) => s,
                    Err(EngineError::ZeroBound) => *best == current_bound,
                    Err(e) => return Err(e),
                };
            if stop || exhausted {
                let termination = if stop { Termination::RatioMet } else { Termination::FrontierEmpty };
                return Ok(finish(
                    termination,
                    incumbent,
                    current_bound,
                    explored,
                    max_depth,
                    left_turn_max,
                    level_counts,
                    depth_cap_hits,
                ));
            }
        }
        first = false;
        if cfg.node_limit.is_some_and(|limit| explored >= limit) {
            return Ok(finish(
                Termination::NodeLimit,
                incumbent,
                current_bound,
                explored,
                max_depth,
                left_turn_max,
                level_counts,
                depth_cap_hits,
            ));
        }

        // Select, skipping nodes dominated since insertion.
        let node = loop {
            match frontier.select_next() {
                None => break None,
                Some(n) if dominated(sense, &n.local_lb, &n.local_ub, &incumbent.value) => continue,
                Some(n) => break Some(n),
            }
        };
        let Some(node) = node else {
            continue;
        };
        if node.id != 0 {
            explored += 1;
        }
        if cfg.depth_limit.is_some_and(|d| node.depth >= d) {
            depth_cap_hits += 1;
            continue;
        }

        let children = match adapter.expand(&node)? {
            Expansion::Leaf => continue,
            Expansion::Halt(found) => {
                if let Some((v, s)) = found {
                    incumbent.offer(sense, v, s, explored);
                }
                let bound = frontier.bound().unwrap_or_else(|| current_bound.clone());
                let bound = match sense {
                    Sense::Maximize => bound.max(node.local_ub.clone()),
                    Sense::Minimize => bound.min(node.local_lb.clone()),
                };
                return Ok(finish(
                    Termination::Halted,
                    incumbent,
                    bound,
                    explored,
                    max_depth,
                    left_turn_max,
                    level_counts,
                    depth_cap_hits,
                ));
            }
            Expansion::Children(c) => c,
        };

        let mut staged = Vec::with_capacity(children.len());
        for child in children {
            let id = next_id;
            next_id += 1;
            check_bounds(id, &child.lb, &child.ub)?;
            match sense {
                Sense::Maximize if child.ub > node.local_ub => {
                    return Err(EngineError::Monotonicity {
                        parent: node.id,
                        child: id,
                        parent_bound: node.local_ub.clone(),
                        child_bound: child.ub,
                    })
                }
                Sense::Minimize if child.lb < node.local_lb => {
                    return Err(EngineError::Monotonicity {
                        parent: node.id,
                        child: id,
                        parent_bound: node.local_lb.clone(),
                        child_bound: child.lb,
                    })
                }
                _ => {}
            }
            if let Some((v, s)) = child.incumbent {
                incumbent.offer(sense, v, s, explored);
            }
            let mut decisions = node.decisions.clone();
            if let Some(d) = child.decision {
                decisions.push(d);
            }
            staged.push(Node {
                id,
                parent: Some(node.id),
                depth: node.depth + 1,
                decisions,
                local_lb: child.lb,
                local_ub: child.ub,
                is_right_turn: child.is_right_turn,
                left_turns: node.left_turns + usize::from(!child.is_right_turn),
                payload: child.payload,
            });
        }
        for child in staged {
            if dominated(sense, &child.local_lb, &child.local_ub, &incumbent.value) {
                continue;
            }
            if !adapter.admit(&child) {
                continue;
            }
            max_depth = max_depth.max(child.depth);
            left_turn_max = left_turn_max.max(child.left_turns);
            if level_counts.len() <= child.depth {
                level_counts.resize(child.depth + 1, 0);
            }
            level_counts[child.depth] += 1;
            frontier.insert(child);
        }
    }
}

fn check_bounds(id: u64, lb: &Rational, ub: &Rational) -> Result<(), EngineError> {
    if lb > ub {
        return Err(EngineError::InvertedBounds {
            id,
            lb: lb.clone(),
            ub: ub.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn node(id: u64, depth: usize, lb: Rational, ub: Rational) -> Node<()> {
        Node {
            id,
            parent: None,
            depth,
            decisions: vec![],
            local_lb: lb,
            local_ub: ub,
            is_right_turn: false,
            left_turns: 0,
            payload: (),
        }
    }

    #[test]
    fn best_first_max_takes_highest_ub() {
        let mut f = Frontier::new(Sense::Maximize, Selection::BestFirst);
        f.insert(node(0, 1, q(0, 1), q(10, 1)));
        f.insert(node(1, 1, q(0, 1), q(12, 1)));
        assert_eq!(f.bound(), Some(q(12, 1)));
        assert_eq!(f.select_next().unwrap().id, 1);
    }

    #[test]
    fn best_first_min_ties_to_lower_id() {
        let mut f = Frontier::new(Sense::Minimize, Selection::BestFirst);
        f.insert(node(5, 1, q(4, 1), q(9, 1)));
        f.insert(node(3, 1, q(4, 1), q(7, 1)));
        assert_eq!(f.select_next().unwrap().id, 3);
        assert_eq!(f.select_next().unwrap().id, 5);
        assert!(f.select_next().is_none());
    }

    #[test]
    fn dfs_is_lifo_and_bfs_is_fifo() {
        for (sel, expect) in [(Selection::Dfs, vec![3, 2, 1]), (Selection::Bfs, vec![1, 2, 3])] {
            let mut f = Frontier::new(Sense::Maximize, sel);
            for id in 1..=3 {
                f.insert(node(id, 1, q(0, 1), q(5, 1)));
            }
            let got: Vec<u64> = std::iter::from_fn(|| f.select_next().map(|n| n.id)).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn stopping_boundaries() {
        let alpha = StopRule::Alpha(q(97, 100));
        assert!(should_stop(&q(97, 1), &q(100, 1), &alpha, Sense::Maximize).unwrap());
        assert!(!should_stop(&q(60, 1), &q(92, 1), &alpha, Sense::Maximize).unwrap());
        let eps = StopRule::Epsilon(q(1, 10));
        assert!(should_stop(&q(11, 1), &q(10, 1), &eps, Sense::Minimize).unwrap());
        assert!(!should_stop(&q(111, 10), &q(10, 1), &eps, Sense::Minimize).unwrap());
        assert_eq!(
            should_stop(&q(1, 1), &q(0, 1), &eps, Sense::Minimize),
            Err(EngineError::ZeroBound)
        );
        assert!(matches!(
            should_stop(&q(1, 1), &q(2, 1), &eps, Sense::Maximize),
            Err(EngineError::RuleMismatch { .. })
        ));
    }

    #[test]
    fn strategy_validation() {
        let k = Strategy::knapsack(Selection::BestFirst, BranchRule::Ce);
        assert!(k.validate(ProblemFamily::Knapsack).is_ok());
        assert!(k.validate(ProblemFamily::Scheduling).is_err());
        let s = Strategy::scheduling(Selection::Dfs, BoundRule::Lr, RoundRule::Bm);
        assert!(s.validate(ProblemFamily::Scheduling).is_ok());
        let bad = Strategy {
            branching: BranchRule::Ce,
            ..s
        };
        assert!(bad.validate(ProblemFamily::Scheduling).is_err());
        assert_eq!(k.to_string(), "HUB/CE/SUR/DZ");
        assert_eq!(s.to_string(), "DFS/MMP/LR/BM");
    }

    /// Toy maximization: pick a subset of values with at most `k` elements.
    /// Node payload is (next index, chosen count, value so far).
    struct Pick {
        values: Vec<i64>,
        k: usize,
        integral_root: bool,
        bad_child: bool,
    }

    impl Pick {
        fn bound(&self, next: usize, count: usize, acc: i64) -> Rational {
            let mut rest: Vec<i64> = self.values[next..].to_vec();
            rest.sort_unstable_by(|a, b| b.cmp(a));
            Rational::from_integer(acc + rest.iter().take(self.k - count).sum::<i64>())
        }
    }

    impl Adapter for Pick {
        type Payload = (usize, usize, i64);
        type Solution = i64;

        fn sense(&self) -> Sense {
            Sense::Maximize
        }

        fn root(&mut self) -> Result<Evaluated<Self::Payload, i64>, EngineError> {
            let ub = self.bound(0, 0, 0);
            let lb = if self.integral_root { ub.clone() } else { Rational::zero() };
            Ok(Evaluated {
                decision: None,
                is_right_turn: false,
                incumbent: Some((lb.clone(), 0)),
                lb,
                ub,
                payload: (0, 0, 0),
            })
        }

        fn expand(&mut self, node: &Node<Self::Payload>) -> Result<Expansion<Self::Payload, i64>, EngineError> {
            let (next, count, acc) = node.payload;
            if next == self.values.len() || count == self.k {
                return Ok(Expansion::Leaf);
            }
            let mut out = Vec::new();
            for take in [true, false] {
                if take && count == self.k {
                    continue;
                }
                let (c, a) = if take { (count + 1, acc + self.values[next]) } else { (count, acc) };
                let mut ub = self.bound(next + 1, c, a);
                if self.bad_child {
                    ub = ub + Rational::from_integer(1000);
                }
                out.push(Evaluated {
                    decision: Some((next, usize::from(!take))),
                    is_right_turn: !take,
                    lb: Rational::from_integer(a),
                    ub,
                    incumbent: Some((Rational::from_integer(a), a)),
                    payload: (next + 1, c, a),
                });
            }
            Ok(Expansion::Children(out))
        }

        fn tracks_left_turns(&self) -> bool {
            true
        }
    }

    #[test]
    fn integral_root_stops_immediately() {
        let mut a = Pick {
            values: vec![5, 3, 8],
            k: 2,
            integral_root: true,
            bad_child: false,
        };
        let res = run(&mut a, &RunConfig::new(Selection::BestFirst, StopRule::Alpha(q(1, 2)))).unwrap();
        assert_eq!(res.nodes_explored, 1);
        assert_eq!(res.termination, Termination::RatioMet);
        assert_eq!(res.best_value, q(13, 1));
    }

    #[test]
    fn exact_search_and_limits() {
        let values = vec![4, 9, 1, 7, 3, 8, 2];
        for sel in [Selection::BestFirst, Selection::Dfs, Selection::Bfs] {
            let mut a = Pick {
                values: values.clone(),
                k: 3,
                integral_root: false,
                bad_child: false,
            };
            let res = run(&mut a, &RunConfig::new(sel, StopRule::Alpha(q(1, 1)))).unwrap();
            assert_eq!(res.best_value, q(24, 1), "{sel:?}");
            assert!(res.left_turn_max.unwrap() <= 3);
            assert_eq!(res.level_counts[0], 1);

            let mut a = Pick {
                values: values.clone(),
                k: 3,
                integral_root: false,
                bad_child: false,
            };
            let res = run(&mut a, &RunConfig::new(sel, StopRule::Alpha(q(1, 1))).with_node_limit(2)).unwrap();
            assert!(res.nodes_explored <= 2);
            if res.termination == Termination::NodeLimit {
                assert!(res.best_value <= q(24, 1));
            }
        }
    }

    #[test]
    fn monotonicity_violation_is_reported() {
        let mut a = Pick {
            values: vec![1, 2, 3],
            k: 2,
            integral_root: false,
            bad_child: true,
        };
        let err = run(&mut a, &RunConfig::new(Selection::Dfs, StopRule::Alpha(q(1, 1)))).unwrap_err();
        assert!(matches!(err, EngineError::Monotonicity { .. }));
    }

    #[test]
    fn rule_must_match_sense() {
        let mut a = Pick {
            values: vec![1],
            k: 1,
            integral_root: false,
            bad_child: false,
        };
        let err = run(&mut a, &RunConfig::new(Selection::Dfs, StopRule::Epsilon(q(1, 10)))).unwrap_err();
        assert!(matches!(err, EngineError::RuleMismatch { .. }));
    }
}
