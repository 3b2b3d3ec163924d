use vrpagent_core::ProblemKind;
use vrpagent_discovery::prompts::{all_texts, seed_code, Role};
use vrpagent_discovery::{CrossoverMode, ProblemContext, TemplateId};

#[test]
fn shipped_texts_match_pinned_digests() {
    let texts = all_texts();
    assert_eq!(texts.len(), 15);
    for t in texts {
        assert_eq!(t.computed_digest(), t.digest, "{}", t.name);
    }
}

#[test]
fn biased_crossover_orders_parents_and_states_the_split() {
    let ctx = ProblemContext::new(ProblemKind::Cvrp);
    let msgs = ctx.crossover_prompt("BETTER {x}", "WORSE", CrossoverMode::Biased, 0.8).unwrap();
    assert_eq!(msgs.len(), 2);
    assert_eq!(msgs[0].role, Role::System);
    assert!(msgs[0].content.contains(ctx.description()));
    let user = &msgs[1].content;
    assert_eq!(msgs[1].role, Role::User);
    assert!(user.contains("(80%)") && user.contains("(20%)"));
    let b = user.find("[Better Code]\nBETTER {x}").unwrap();
    let w = user.find("[Worse Code]\nWORSE").unwrap();
    assert!(b < w);

    let other = ctx.crossover_prompt("a", "b", CrossoverMode::Biased, 0.65).unwrap();
    assert!(other[1].content.contains("(65%)") && other[1].content.contains("(35%)"));
}

#[test]
fn standard_crossover_has_no_bias() {
    let ctx = ProblemContext::new(ProblemKind::Vrptw);
    let user = &ctx.crossover_prompt("a", "b", CrossoverMode::Standard, 0.8).unwrap()[1].content;
    assert!(!user.contains('%'));
    assert!(user.contains("roughly half"));
}

#[test]
fn seed_prompt_embeds_code_and_problem_headers() {
    for kind in [ProblemKind::Cvrp, ProblemKind::Vrptw, ProblemKind::Pcvrp] {
        let ctx = ProblemContext::new(kind);
        let msgs = ctx.seed_prompt().unwrap();
        let user = &msgs[1].content;
        assert!(user.contains(seed_code()));
        let lib = user.find("# Libary context").unwrap();
        assert!(user[lib..].contains(ctx.headers()));
        assert!(msgs[0].content.contains(ctx.name_long()));
    }
    let tw = ProblemContext::new(ProblemKind::Vrptw).headers();
    assert!(tw.contains("twStart"));
    let pc = ProblemContext::new(ProblemKind::Pcvrp).headers();
    assert!(pc.contains("prize"));
}

#[test]
fn every_mutation_embeds_the_code_once() {
    let ctx = ProblemContext::new(ProblemKind::Cvrp);
    for kind in TemplateId::MUTATIONS {
        let msgs = ctx.mutation_prompt(kind, "int marker_xyz;").unwrap();
        assert_eq!(msgs[1].content.matches("int marker_xyz;").count(), 1, "{kind}");
        assert!(msgs[1].content.contains("```cpp"));
    }
}
