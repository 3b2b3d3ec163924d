use std::cell::Cell;

use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrpagent_core::lns::{accept_at, sanitize_order, sanitize_removal};
use vrpagent_core::operators::{OperatorError, OrderingOperator, RemovalOperator, SortByKey, SortKey};
use vrpagent_core::{
    generate, initial_solution, run, validate, GenParams, Instance, LnsConfig, LnsError, OperatorPair,
    Origin, ProblemKind, Solution,
};
use vrpagent_oracles as oracle;

/// Returns garbage: duplicates, the depot, out-of-range ids and unassigned
/// customers, and checks every solution it is shown.
struct Adversary {
    seen_invalid: Cell<u64>,
}

impl RemovalOperator for Adversary {
    fn select(&self, instance: &Instance, solution: &Solution, rng: &mut dyn RngCore) -> Result<Vec<usize>, OperatorError> {
        if !validate(solution, instance).feasible() {
            self.seen_invalid.set(self.seen_invalid.get() + 1);
        }
        let n = instance.num_customers();
        let mut out = Vec::new();
        for _ in 0..rng.gen_range(0..40) {
            out.push(match rng.gen_range(0..6) {
                0 => 0,
                1 => n + 1 + rng.gen_range(0..5),
                2 => usize::MAX,
                _ => rng.gen_range(1..=n),
            });
        }
        if let Some(&c) = out.first() {
            out.push(c);
        }
        Ok(out)
    }
}

struct ChaoticOrder;

impl OrderingOperator for ChaoticOrder {
    fn order(&self, instance: &Instance, removed: &[usize], _: &Solution, rng: &mut dyn RngCore) -> Result<Vec<usize>, OperatorError> {
        let mut out: Vec<usize> = removed.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
        out.extend(removed.iter().take(2));
        out.push(0);
        out.push(instance.num_nodes() + 3);
        Ok(out)
    }
}

#[test]
fn adversarial_operators_never_break_feasibility() {
    for kind in ProblemKind::ALL {
        let inst = generate(&GenParams::new(kind, 60, 3)).unwrap();
        let adversary = Adversary { seen_invalid: Cell::new(0) };
        let ops = OperatorPair {
            remove: Box::new(adversary),
            order: Box::new(ChaoticOrder),
            label: "adversary".into(),
            origin: Origin::ExternalCandidate,
        };
        let mut config = LnsConfig::with_iterations(2_000, 11);
        config.validate_every = 1;
        let (best, stats) = run(&inst, &ops, &config).unwrap();
        assert!(validate(&best, &inst).feasible());
        assert_eq!(stats.rejected_invalid, 0);
    }
}

#[test]
fn operator_failure_aborts_with_best_so_far() {
    struct FailsLater(Cell<u32>);
    impl RemovalOperator for FailsLater {
        fn select(&self, i: &Instance, s: &Solution, r: &mut dyn RngCore) -> Result<Vec<usize>, OperatorError> {
            self.0.set(self.0.get() + 1);
            if self.0.get() > 100 {
                return Err(OperatorError::Crash("segfault".into()));
            }
            vrpagent_core::operators::SeedRandomRemove.select(i, s, r)
        }
    }
    let inst = generate(&GenParams::new(ProblemKind::Cvrp, 40, 1)).unwrap();
    let ops = OperatorPair::new(FailsLater(Cell::new(0)), SortByKey(SortKey::Random), "flaky", Origin::ExternalCandidate);
    match run(&inst, &ops, &LnsConfig::with_iterations(1_000, 1)) {
        Err(LnsError::Operator { best, stats, source, .. }) => {
            assert_eq!(source, OperatorError::Crash("segfault".into()));
            assert_eq!(stats.iterations, 101);
            assert!(validate(&best, &inst).feasible());
            assert!(best.objective() <= stats.initial_objective);
        }
        other => panic!("expected operator failure, got {other:?}"),
    }
}

#[test]
fn iteration_budget_is_deterministic() {
    for kind in ProblemKind::ALL {
        let inst = generate(&GenParams::new(kind, 100, 5)).unwrap();
        let a = run(&inst, &OperatorPair::sisrs(), &LnsConfig::with_iterations(800, 9)).unwrap();
        let b = run(&inst, &OperatorPair::sisrs(), &LnsConfig::with_iterations(800, 9)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.best_objective.to_bits(), b.1.best_objective.to_bits());
        let c = run(&inst, &OperatorPair::sisrs(), &LnsConfig::with_iterations(800, 10)).unwrap();
        assert_eq!(c.1.iterations, 800);
    }
}

#[test]
fn best_trace_is_non_increasing() {
    let inst = generate(&GenParams::new(ProblemKind::Vrptw, 100, 2)).unwrap();
    let (best, stats) = run(&inst, &OperatorPair::seed(), &LnsConfig::with_time(0.5, 3)).unwrap();
    assert!(stats.best_objective_trace.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 >= w[0].0));
    assert_eq!(stats.best_objective_trace.last().unwrap().1, best.objective());
    assert!(stats.iterations >= stats.improved_count);
    assert!(stats.elapsed >= 0.5);
}

#[test]
fn seed_pair_reaches_brute_force_optimum_on_tiny_instances() {
    for seed in 0..8 {
        let n = 5 + (seed as usize % 4);
        let mut params = GenParams::new(ProblemKind::Cvrp, n, 1000 + seed);
        params.capacity = 15;
        let inst = generate(&params).unwrap();
        let (best, _) = run(&inst, &OperatorPair::seed(), &LnsConfig::with_iterations(3_000, seed)).unwrap();
        let optimum = oracle::brute_force_optimum(&inst);
        assert!(best.objective() >= optimum - 1e-9);
        assert!(best.objective() <= optimum * 1.005, "seed {seed}: {} vs {optimum}", best.objective());
    }
}

#[test]
fn pcvrp_run_beats_or_matches_serving_nobody_and_serving_everyone() {
    let inst = generate(&GenParams::new(ProblemKind::Pcvrp, 8, 4)).unwrap();
    let (best, _) = run(&inst, &OperatorPair::seed(), &LnsConfig::with_iterations(3_000, 1)).unwrap();
    let optimum = oracle::brute_force_optimum(&inst);
    assert!(best.objective() <= inst.total_prize() + 1e-12);
    assert!(best.objective() <= initial_solution(&inst).unwrap().objective());
    assert!(best.objective() >= optimum - 1e-9);
}

#[test]
fn acceptance_frequency_follows_exponential_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for ratio in [0.5, 1.0, 2.0, 4.0] {
        let temperature = 0.3;
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| accept_at(10.0, 10.0 + ratio * temperature, temperature, &mut rng))
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - (-ratio).exp()).abs() < 0.02, "ratio {ratio}: {freq}");
    }
}

#[test]
fn huge_worsening_at_tiny_temperature_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let accepted = (0..100_000).filter(|_| accept_at(1.0, 1.0 + 15.0, 1.0, &mut rng)).count();
    assert!(accepted <= 2, "exp(-15) ~ 3e-7, saw {accepted}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sanitizers_are_idempotent(raw in proptest::collection::vec(0usize..40, 0..60), seed in any::<u64>()) {
        let inst = generate(&GenParams::new(ProblemKind::Cvrp, 30, seed)).unwrap();
        let mut sol = initial_solution(&inst).unwrap();
        sol.remove_customers(&inst, &[3, 4, 5]).unwrap();
        let once = sanitize_removal(&inst, &sol, &raw);
        prop_assert_eq!(sanitize_removal(&inst, &sol, &once), once.clone());
        prop_assert!(once.len() <= 15);
        prop_assert!(once.iter().all(|&c| sol.is_assigned(c)));

        let removed: Vec<usize> = (1..=30).filter(|c| c % 3 == 0).collect();
        let order = sanitize_order(&removed, &raw);
        prop_assert_eq!(sanitize_order(&removed, &order), order.clone());
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, removed);
    }
}
