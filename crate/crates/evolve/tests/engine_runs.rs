use fairpb_core::model::{BallotKind, Objective, Sat};
use fairpb_core::testkit::{random_case, rng, Shape};
use fairpb_evolve::{run_evolution, EngineConfig, EvalContext, Event, Purpose, ScriptedClient, StrategyKind};

fn context() -> EvalContext {
    let mut r = rng(2024);
    let items = (0..3)
        .map(|k| {
            let (i, p) = random_case(&mut r, Shape::small(BallotKind::Approval));
            (format!("train{k}"), i, p, None)
        })
        .collect();
    EvalContext::build(items, Objective::ApprovalSat(Sat::Cost), 100).unwrap()
}

/// Replies depend only on the request, so any schedule sees the same ones.
fn client() -> ScriptedClient {
    ScriptedClient::with_fallback(Vec::new(), |r| {
        Some(match r.purpose {
            Purpose::Refine(StrategyKind::Exploration) => "{blend the two parents' cost terms}".to_string(),
            Purpose::Refine(StrategyKind::Modification) => "{shrink every constant by half}".to_string(),
            _ => {
                let k = r.seq % 7;
                let body = ["app_count/cost", "app_rate", "1/cost", "cost", "sqrt(app_rate)*(1/(1+cost/budget))", "app_count", "score_sum/cost^2"][k as usize];
                format!("{{variant {}}}\n```\n{body} + {}*0.001\n```", r.seq, r.seq)
            }
        })
    })
}

#[test]
fn event_log_is_reproducible_and_elitist() {
    let ctx = context();
    let cfg = EngineConfig { population_size: 6, generations: 8, seed: 42, ..EngineConfig::default() };
    let mut first = Vec::new();
    let a = run_evolution(&cfg, &ctx, &client(), &mut first, None).unwrap();
    let mut second = Vec::new();
    run_evolution(&cfg, &ctx, &client(), &mut second, None).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, second);

    let best = a.population.best_history();
    assert_eq!(best.len(), 9);
    assert!(best.windows(2).all(|w| w[0] <= w[1]), "{best:?}");
    for e in &a.events {
        if let Event::Generation { strategies, .. } = e {
            assert!(strategies.len() <= 5);
        }
    }
    let q = a.population.best_fitness().unwrap();
    assert!(q <= 1.0);
}

#[test]
fn seed_changes_parent_choice() {
    let ctx = context();
    let base = EngineConfig { population_size: 6, generations: 3, epsilon: Some(0.5), ..EngineConfig::default() };
    let mut logs = Vec::new();
    for seed in [1, 2] {
        let llm = client();
        run_evolution(&EngineConfig { seed, ..base.clone() }, &ctx, &llm, Vec::new(), None).unwrap();
        logs.push(llm.requests().into_iter().map(|r| r.messages[0].content.clone()).collect::<Vec<_>>());
    }
    assert_ne!(logs[0], logs[1]);
}
