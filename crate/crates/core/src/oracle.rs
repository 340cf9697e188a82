//! Exact solvers for small instances, used to measure optimality gaps.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::instance::{Instance, KnapsackInstance, SchedulingInstance};
use crate::knapsack::IntKnapSolution;
use crate::rational::Rational;
use crate::scheduling::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMethod {
    Dp,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Witness {
    Knapsack(IntKnapSolution),
    Scheduling(Schedule),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: Rational,
    pub witness: Witness,
    pub method: OracleMethod,
    /// States visited.
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle budget of {0} states exceeded")]
    BudgetExceeded(usize),
}

/// Default state budget.
pub const DEFAULT_BUDGET: usize = 20_000_000;

pub fn exact_opt(inst: &Instance, budget: usize) -> Result<OracleResult, OracleError> {
    match inst {
        Instance::Knapsack(k) if k.is_integral() => knapsack_dp(k, budget),
        Instance::Knapsack(k) => knapsack_exhaustive(k, budget),
        Instance::Scheduling(s) => scheduling_exhaustive(s, budget),
    }
}

/// Item-by-item DP over vectors of used capacity. Requires integral
/// weights and capacities.
pub fn knapsack_dp(inst: &KnapsackInstance, budget: usize) -> Result<OracleResult, OracleError> {
    assert!(inst.is_integral(), "DP needs integral data");
    let caps: Vec<i64> = inst.capacities.iter().map(|c| c.floor_i64().expect("small capacity")).collect();
    let weights: Vec<i64> = inst.weights.iter().map(|w| w.floor_i64().expect("small weight")).collect();
    // used capacity -> (profit, assignment)
    let mut layer: HashMap<Vec<i64>, (Rational, Vec<Option<usize>>)> = HashMap::new();
    layer.insert(vec![0; inst.m], (Rational::zero(), vec![None; inst.n]));
    let mut states = 1usize;
    for j in 0..inst.n {
        let mut next: HashMap<Vec<i64>, (Rational, Vec<Option<usize>>)> = HashMap::with_capacity(layer.len() * 2);
        for (used, (profit, assign)) in &layer {
            let mut offer = |key: Vec<i64>, value: Rational, a: Vec<Option<usize>>| match next.get(&key) {
                Some((v, _)) if *v >= value => {}
                _ => {
                    next.insert(key, (value, a));
                }
            };
            offer(used.clone(), profit.clone(), assign.clone());
            for i in 0..inst.m {
                if used[i] + weights[j] <= caps[i] {
                    let mut key = used.clone();
                    key[i] += weights[j];
                    let mut a = assign.clone();
                    a[j] = Some(i);
                    offer(key, profit + &inst.profits[j], a);
                }
            }
        }
        states += next.len();
        if states > budget {
            return Err(OracleError::BudgetExceeded(budget));
        }
        layer = next;
    }
    let (value, assignment) = layer
        .into_values()
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)))
        .expect("at least the empty state");
    Ok(OracleResult {
        optimum: value.clone(),
        witness: Witness::Knapsack(IntKnapSolution { assignment, value }),
        method: OracleMethod::Dp,
        states,
    })
}

/// Enumerates all `(m+1)^n` placements, skipping overfull branches.
pub fn knapsack_exhaustive(inst: &KnapsackInstance, budget: usize) -> Result<OracleResult, OracleError> {
    struct Search<'a> {
        inst: &'a KnapsackInstance,
        room: Vec<Rational>,
        cur: Vec<Option<usize>>,
        value: Rational,
        best: (Rational, Vec<Option<usize>>),
        states: usize,
        budget: usize,
    }
    impl Search<'_> {
        fn go(&mut self, j: usize) -> Result<(), OracleError> {
            self.states += 1;
            if self.states > self.budget {
                return Err(OracleError::BudgetExceeded(self.budget));
            }
            if j == self.inst.n {
                if self.value > self.best.0 {
                    self.best = (self.value.clone(), self.cur.clone());
                }
                return Ok(());
            }
            self.go(j + 1)?;
            for i in 0..self.inst.m {
                if self.inst.weights[j] <= self.room[i] {
                    self.room[i] -= &self.inst.weights[j];
                    self.value += &self.inst.profits[j];
                    self.cur[j] = Some(i);
                    self.go(j + 1)?;
                    self.cur[j] = None;
                    self.value -= &self.inst.profits[j];
                    self.room[i] += &self.inst.weights[j];
                }
            }
            Ok(())
        }
    }
    let mut s = Search {
        inst,
        room: inst.capacities.clone(),
        cur: vec![None; inst.n],
        value: Rational::zero(),
        best: (Rational::zero(), vec![None; inst.n]),
        states: 0,
        budget,
    };
    s.go(0)?;
    let (value, assignment) = s.best;
    Ok(OracleResult {
        optimum: value.clone(),
        witness: Witness::Knapsack(IntKnapSolution { assignment, value }),
        method: OracleMethod::Exhaustive,
        states: s.states,
    })
}

/// Enumerates the `m^n` assignments depth-first, cutting branches whose
/// partial makespan already matches the best found.
pub fn scheduling_exhaustive(inst: &SchedulingInstance, budget: usize) -> Result<OracleResult, OracleError> {
    struct Search<'a> {
        inst: &'a SchedulingInstance,
        load: Vec<Rational>,
        cur: Vec<usize>,
        best: Option<(Rational, Vec<usize>)>,
        states: usize,
        budget: usize,
    }
    impl Search<'_> {
        fn go(&mut self, j: usize) -> Result<(), OracleError> {
            self.states += 1;
            if self.states > self.budget {
                return Err(OracleError::BudgetExceeded(self.budget));
            }
            let span = self.load.iter().max().cloned().unwrap_or_default();
            if let Some((b, _)) = &self.best {
                if span >= *b {
                    return Ok(());
                }
            }
            if j == self.inst.n {
                self.best = Some((span, self.cur.clone()));
                return Ok(());
            }
            for i in 0..self.inst.m {
                self.load[i] += &self.inst.processing[j][i];
                self.cur[j] = i;
                self.go(j + 1)?;
                self.load[i] -= &self.inst.processing[j][i];
            }
            Ok(())
        }
    }
    let mut s = Search {
        inst,
        load: inst.overheads.clone(),
        cur: vec![0; inst.n],
        best: None,
        states: 0,
        budget,
    };
    s.go(0)?;
    let (optimum, assignment) = s.best.unwrap_or_else(|| (Rational::zero(), Vec::new()));
    Ok(OracleResult {
        optimum: optimum.clone(),
        witness: Witness::Scheduling(Schedule {
            assignment,
            makespan: optimum,
        }),
        method: OracleMethod::Exhaustive,
        states: s.states,
    })
}

/// `|z - z*| / max(z, z*)`; zero when both values are zero.
pub fn optimality_gap(z: &Rational, z_star: &Rational) -> Rational {
    let denom = z.max(z_star);
    if denom.is_zero() {
        return Rational::zero();
    }
    &(z - z_star).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    #[test]
    fn worked_knapsack() {
        let inst = KnapsackInstance::from_integers(&[5, 5], &[6, 5, 4], &[60, 40, 20]).unwrap();
        let dp = knapsack_dp(&inst, 1000).unwrap();
        let ex = knapsack_exhaustive(&inst, 1000).unwrap();
        assert_eq!(dp.optimum, r(60));
        assert_eq!(ex.optimum, r(60));
        for res in [dp, ex] {
            let Witness::Knapsack(sol) = res.witness else { panic!() };
            assert!(sol.is_feasible(&inst));
        }
    }

    #[test]
    fn worked_schedule() {
        let inst = SchedulingInstance::identical_from_integers(&[3, 3, 2], 2).unwrap();
        let res = exact_opt(&Instance::Scheduling(inst.clone()), 1000).unwrap();
        assert_eq!(res.optimum, r(5));
        let Witness::Scheduling(s) = res.witness else { panic!() };
        assert!(s.is_consistent(&inst));
    }

    #[test]
    fn empty_instances() {
        let k = KnapsackInstance::from_integers(&[3], &[], &[]).unwrap();
        assert_eq!(exact_opt(&Instance::Knapsack(k), 10).unwrap().optimum, r(0));
        let s = SchedulingInstance::identical_from_integers(&[], 2).unwrap();
        assert_eq!(scheduling_exhaustive(&s, 10).unwrap().optimum, r(0));
    }

    #[test]
    fn budget_is_enforced() {
        let s = SchedulingInstance::identical_from_integers(&[5; 9], 3).unwrap();
        assert_eq!(scheduling_exhaustive(&s, 10), Err(OracleError::BudgetExceeded(10)));
    }

    #[test]
    fn gap_formula() {
        assert_eq!(optimality_gap(&r(90), &r(100)), q(1, 10));
        assert_eq!(optimality_gap(&r(100), &r(90)), q(1, 10));
        assert_eq!(optimality_gap(&r(60), &r(60)), r(0));
        assert_eq!(optimality_gap(&r(0), &r(0)), r(0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(150))]

        #[test]
        fn dp_agrees_with_enumeration(
            caps in proptest::collection::vec(0i64..15, 1..=3),
            items in proptest::collection::vec((1i64..10, 1i64..30), 0..=6),
        ) {
            let (w, p): (Vec<i64>, Vec<i64>) = items.into_iter().unzip();
            let inst = KnapsackInstance::from_integers(&caps, &w, &p).unwrap();
            let dp = knapsack_dp(&inst, 1_000_000).unwrap();
            let ex = knapsack_exhaustive(&inst, 1_000_000).unwrap();
            prop_assert_eq!(&dp.optimum, &ex.optimum);
            let Witness::Knapsack(sol) = dp.witness else { unreachable!() };
            prop_assert!(sol.is_feasible(&inst));
        }
    }
}
