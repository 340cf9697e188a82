use approxbnb::engine::{BoundRule, BranchRule, RoundRule, Selection, Termination};
use approxbnb::instance::{KnapsackInstance, SchedulingInstance};
use approxbnb::knapsack;
use approxbnb::oracle::{exact_opt, knapsack_dp, scheduling_exhaustive};
use approxbnb::profiles;
use approxbnb::scheduling::{self, UnrelatedOptions};
use approxbnb::{q, Rational};
use proptest::prelude::*;

fn r(n: i64) -> Rational {
    Rational::from_integer(n)
}

#[test]
fn worked_knapsack_run() {
    let inst = KnapsackInstance::from_integers(&[5, 5], &[6, 5, 4], &[60, 40, 20]).unwrap();
    let run = knapsack::solve(&inst, &q(1, 2), Selection::BestFirst, BranchRule::Ce, None).unwrap();
    let best = run.result.best_solution.unwrap();
    assert!(best.is_feasible(&inst));
    assert_eq!(run.result.best_value, r(60));
}

#[test]
fn worked_schedule_runs() {
    let inst = SchedulingInstance::identical_from_integers(&[3, 3, 2], 2).unwrap();
    for round in [RoundRule::As, RoundRule::Bm, RoundRule::LstMatch] {
        let opts = UnrelatedOptions { round, ..UnrelatedOptions::default() };
        let run = scheduling::solve(&inst, &q(1, 100), &opts).unwrap();
        assert_eq!(run.result.best_value, r(5));
    }
    let run = profiles::solve_equivalent(&inst, &q(1, 2), None).unwrap();
    assert!(run.result.best_value <= r(5) * q(9, 4));
    assert!(run.result.best_solution.unwrap().is_consistent(&inst));
}

#[test]
fn solver_rejects_bad_parameters() {
    let k = KnapsackInstance::from_integers(&[5], &[3], &[4]).unwrap();
    assert!(knapsack::solve(&k, &r(1), Selection::Dfs, BranchRule::Ce, None).is_err());
    assert!(knapsack::solve(&k, &q(1, 2), Selection::Dfs, BranchRule::Mmp, None).is_err());
    let s = SchedulingInstance::identical_from_integers(&[3, 2], 2).unwrap();
    assert!(scheduling::solve(&s, &r(0), &UnrelatedOptions::default()).is_err());
    let u = SchedulingInstance::unrelated_from_integers(&[vec![1, 2], vec![2, 1]]).unwrap();
    assert!(profiles::solve_equivalent(&u, &q(1, 2), None).is_err());
    assert!(profiles::solve_similar(&s, &r(1), None).is_err());
}

#[test]
fn node_limit_is_respected() {
    let inst = KnapsackInstance::from_integers(&[50, 61, 40], &[11, 23, 31, 17, 29, 13, 19, 7, 37], &[12, 29, 30, 20, 33, 17, 18, 9, 40]).unwrap();
    let run = knapsack::solve(&inst, &q(999, 1000), Selection::Bfs, BranchRule::K, Some(5)).unwrap();
    assert!(run.result.nodes_explored <= 5);
    assert_eq!(run.result.termination, Termination::NodeLimit);
    assert!(run.result.best_solution.unwrap().is_feasible(&inst));
}

fn knapsack_strategy() -> impl Strategy<Value = (Selection, BranchRule)> {
    (
        prop_oneof![Just(Selection::Dfs), Just(Selection::Bfs), Just(Selection::BestFirst)],
        prop_oneof![Just(BranchRule::Ce), Just(BranchRule::Ppw), Just(BranchRule::K)],
    )
}

fn scheduling_strategy() -> impl Strategy<Value = (Selection, BoundRule, RoundRule)> {
    (
        prop_oneof![Just(Selection::Dfs), Just(Selection::Bfs), Just(Selection::BestFirst)],
        prop_oneof![Just(BoundRule::Bs), Just(BoundRule::Lr)],
        prop_oneof![Just(RoundRule::As), Just(RoundRule::Bm), Just(RoundRule::LstMatch)],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn knapsack_runs_are_feasible_and_bounded(
        caps in proptest::collection::vec(1i64..30, 1..=3),
        items in proptest::collection::vec((1i64..20, 1i64..40), 1..=7),
        (sel, rule) in knapsack_strategy(),
        alpha in prop_oneof![Just(q(1, 2)), Just(q(4, 5)), Just(q(19, 20))],
    ) {
        let (w, p): (Vec<i64>, Vec<i64>) = items.into_iter().unzip();
        let inst = KnapsackInstance::from_integers(&caps, &w, &p).unwrap();
        let opt = knapsack_dp(&inst, 1_000_000).unwrap().optimum;
        let run = knapsack::solve(&inst, &alpha, sel, rule, None).unwrap();
        let sol = run.result.best_solution.clone().unwrap();
        prop_assert!(sol.is_feasible(&inst));
        prop_assert_eq!(&sol.value, &run.result.best_value);
        prop_assert!(run.result.best_value <= opt);
        prop_assert!(run.result.global_bound >= opt);
        prop_assert!(run.result.best_value >= &alpha * &opt);
        prop_assert_eq!(run.audit.rounding_violations, 0);
        prop_assert_eq!(run.audit.critical_item_violations, 0);
    }

    #[test]
    fn unrelated_runs_are_consistent_and_bounded(
        rows in proptest::collection::vec(proptest::collection::vec(1i64..20, 2), 1..=6),
        (sel, bound, round) in scheduling_strategy(),
        eps in prop_oneof![Just(q(1, 10)), Just(q(1, 2)), Just(r(1))],
    ) {
        let inst = SchedulingInstance::unrelated_from_integers(&rows).unwrap();
        let opt = scheduling_exhaustive(&inst, 1_000_000).unwrap().optimum;
        let opts = UnrelatedOptions { selection: sel, bound, round, node_limit: None, cap_depth: false };
        let run = scheduling::solve(&inst, &eps, &opts).unwrap();
        let s = run.result.best_solution.clone().unwrap();
        prop_assert!(s.is_consistent(&inst));
        prop_assert!(run.result.best_value >= opt);
        prop_assert!(run.result.global_bound <= opt);
        prop_assert!(run.result.best_value <= &(Rational::one() + &eps) * &opt);
        prop_assert_eq!(run.audit.too_many_fractional, 0);
        prop_assert_eq!(run.audit.injection_failures, 0);
        prop_assert_eq!(run.audit.lst_violations, 0);
    }

    #[test]
    fn profile_runs_stay_within_squared_factor(
        times in proptest::collection::vec(1i64..30, 1..=6),
        speeds in proptest::collection::vec(1i64..5, 2),
        eps in prop_oneof![Just(q(1, 4)), Just(q(1, 2))],
    ) {
        let g = Rational::one() + &eps;
        let uniform = SchedulingInstance::uniform_from_integers(&times, &speeds).unwrap();
        let identical = SchedulingInstance::identical_from_integers(&times, 2).unwrap();
        let runs = [
            (uniform.clone(), profiles::solve_similar(&uniform, &eps, None).unwrap()),
            (identical.clone(), profiles::solve_equivalent(&identical, &eps, None).unwrap()),
        ];
        for (inst, run) in runs {
            let opt = exact_opt(&approxbnb::instance::Instance::Scheduling(inst.clone()), 1_000_000).unwrap().optimum;
            let s = run.result.best_solution.clone().unwrap();
            prop_assert!(s.is_consistent(&inst));
            prop_assert_eq!(&s.makespan, &run.result.best_value);
            prop_assert!(run.result.best_value >= opt);
            prop_assert!(run.result.best_value <= &(&g * &g) * &opt);
        }
    }
}
