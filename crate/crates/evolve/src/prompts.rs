//! Prompt text for initialization, offspring generation and strategy
//! refinement. Every request asks for a one-sentence description in braces
//! followed by a single rule expression in a fenced block.

use fairpb_core::dsl::CandidateRule;
use fairpb_core::model::{Objective, Sat};

use crate::strategy::{PromptStrategy, StrategyKind};

pub fn task_description(objective: Objective) -> &'static str {
    match objective {
        Objective::ApprovalSat(Sat::Cost) => {
            "There are M candidate projects, each with a cost, a total budget, and N voters who each \
             approve a subset of the projects. I want a priority score for every project so that \
             funding projects greedily by score maximizes the average, over voters, of the total cost \
             of funded projects the voter approves."
        }
        Objective::ApprovalSat(Sat::Card) => {
            "There are M candidate projects, each with a cost, a total budget, and N voters who each \
             approve a subset of the projects. I want a priority score for every project so that \
             funding projects greedily by score maximizes the average, over voters, of the number of \
             funded projects the voter approves."
        }
        Objective::CardinalUtility => {
            "There are M candidate projects, each with a cost, a total budget, and N voters who each \
             give every project a non-negative valuation. I want a priority score for every project \
             so that funding projects greedily by score maximizes the average, over voters, of the \
             summed valuations of funded projects."
        }
    }
}

/// Stand-in for a code template: the rule language in brief.
pub const RULE_TEMPLATE: &str = "\
Write the score as one expression in this language, inside a ``` fenced block:
  per-project vectors: cost, app_count, app_rate (= app_count / n), score_sum, score_mean
  scalars: budget, n (voters), m (projects), numeric literals
  operators: + - * / ^ and parentheses
  elementwise: sqrt log log1p exp abs neg, pow(x, y), min(x, y), max(x, y)
  reductions to a scalar: sum(v) mean(v) min(v) max(v)
The expression must yield one finite score per project. Costs and budget are in currency units. \
Projects are funded in descending score order while they fit the budget.";

const ANSWER_FORMAT: &str = "First describe your strategy and its main steps in one sentence inside braces { }. \
Then give the expression.";

const NO_EXTRAS: &str = "Reply with nothing else.";

fn describe(rule: &CandidateRule) -> String {
    format!("{{{}}}\n```\n{}\n```", rule.description, rule.source)
}

pub fn init_prompt(objective: Objective) -> String {
    format!("{}\n\n{ANSWER_FORMAT}\n\n{RULE_TEMPLATE}\n\n{NO_EXTRAS}", task_description(objective))
}

pub fn exploration_prompt(objective: Objective, strategy: &PromptStrategy, parents: &[&CandidateRule]) -> String {
    let mut out = format!("{}\n\nHere are {} existing strategies:\n", task_description(objective), parents.len());
    for (k, p) in parents.iter().enumerate() {
        out.push_str(&format!("\nStrategy {}:\n{}\n", k + 1, describe(p)));
    }
    out.push_str(&format!("\n{}\n\n{ANSWER_FORMAT}\n\n{RULE_TEMPLATE}\n\n{NO_EXTRAS}", strategy.text));
    out
}

pub fn modification_prompt(objective: Objective, strategy: &PromptStrategy, parent: &CandidateRule) -> String {
    let fitness = parent.fitness().map_or_else(|| "unknown".to_string(), |q| format!("{q:.6}"));
    format!(
        "{}\n\nHere is one existing strategy:\n{}\nFitness: {fitness}\n\n{}\n\n{ANSWER_FORMAT}\n\n{RULE_TEMPLATE}\n\n{NO_EXTRAS}",
        task_description(objective),
        describe(parent),
        strategy.text
    )
}

/// Asks for one new instruction of `kind`, given the current ones with
/// their scores.
pub fn refinement_prompt(objective: Objective, kind: StrategyKind, current: &[&PromptStrategy], window: usize) -> String {
    let role = match kind {
        StrategyKind::Exploration => "exploration instructions, which ask for rules as unlike their parents as possible",
        StrategyKind::Modification => "modification instructions, which ask for a parent rule to be adjusted, re-parameterized or simplified",
    };
    let mut out = format!(
        "{}\n\nCandidate rules are produced by giving a language model an instruction together with parent rules. \
         Below are the {} current {role}, each scored by the mean fitness of its best rules (higher is better).\n",
        task_description(objective),
        current.len()
    );
    for (k, s) in current.iter().enumerate() {
        let score = s.score(window).map_or_else(|| "none yet".to_string(), |q| format!("{q:.6}"));
        out.push_str(&format!("\nInstruction {}: {}\nScore: {score}\n", k + 1, s.text));
    }
    out.push_str(&format!(
        "\nWrite one new {kind} instruction that takes a clearly different form from these while building on what \
         scored well. Put the instruction, as one sentence, inside braces {{ }}. {NO_EXTRAS}"
    ));
    out
}

/// The instruction text of a refinement reply: the first brace span.
pub fn extract_strategy(reply: &str) -> Option<String> {
    let open = reply.find('{')?;
    let close = open + reply[open..].find('}')?;
    let text = reply[open + 1..close].trim();
    (!text.is_empty()).then(|| text.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::StrategySet;

    #[test]
    fn prompts_carry_parents_and_fitness() {
        let set = StrategySet::initial();
        let e1 = set.get("E1").unwrap();
        let m1 = set.get("M1").unwrap();
        let a = CandidateRule::new("cheap first", "1/cost");
        let mut b = CandidateRule::new("popular first", "app_count");
        b.set_fitness(0.25);
        let obj = Objective::ApprovalSat(Sat::Card);
        let e = exploration_prompt(obj, e1, &[&a, &b]);
        assert!(e.contains("{cheap first}\n```\n1/cost\n```") && e.contains("Strategy 2:") && e.contains(&e1.text));
        let m = modification_prompt(obj, m1, &b);
        assert!(m.contains("Fitness: 0.250000") && m.contains(RULE_TEMPLATE));
        assert!(init_prompt(Objective::CardinalUtility).contains("valuation"));
        let r = refinement_prompt(obj, StrategyKind::Modification, &[m1], 3);
        assert!(r.contains("Score: none yet") && r.contains(&m1.text));
    }

    #[test]
    fn strategy_extraction() {
        assert_eq!(extract_strategy("sure: { Mix two rules. } done").as_deref(), Some("Mix two rules."));
        assert_eq!(extract_strategy("no braces"), None);
        assert_eq!(extract_strategy("{  }"), None);
    }
}
