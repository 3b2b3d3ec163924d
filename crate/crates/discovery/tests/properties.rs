use proptest::prelude::*;
use vrpagent_core::ProblemKind;
use vrpagent_discovery::{extract_code, CrossoverMode, Fitness, ProblemContext};

proptest! {
    #[test]
    fn bound_code_appears_verbatim(better in "[ -~\n]{0,200}", worse in "[ -~\n]{0,200}") {
        let ctx = ProblemContext::new(ProblemKind::Cvrp);
        let user = ctx.crossover_prompt(&better, &worse, CrossoverMode::Biased, 0.8).unwrap().remove(1).content;
        let expected = format!("[Better Code]\n{better}\n\n[Worse Code]\n{worse}\n\n[Task]");
        prop_assert!(user.starts_with(&expected));
        prop_assert!(user.contains("(80%)"));
    }

    #[test]
    fn fenced_code_round_trips(code in "[ -~\n]{1,300}", lang in prop::sample::select(vec!["cpp", "c++", ""])) {
        prop_assume!(!code.contains("```") && !code.trim().is_empty());
        let reply = format!("Sure.\n```{lang}\n{code}\n```\nDone.");
        prop_assert_eq!(extract_code(&reply).unwrap(), code);
    }

    #[test]
    fn failures_always_rank_last(values in prop::collection::vec(-1e9f64..1e9, 0..20), fails in 0usize..5) {
        let mut all: Vec<Fitness> = values.iter().map(|&v| Fitness::Value(v)).collect();
        all.extend(std::iter::repeat_n(Fitness::Disqualified, fails));
        all.reverse();
        all.sort_by(Fitness::cmp_key);
        prop_assert!(all[..values.len()].iter().all(Fitness::is_finite));
        prop_assert!(all.windows(2).all(|w| w[0].key() <= w[1].key()));
    }
}
