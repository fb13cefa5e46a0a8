//! Baseline PB rules. All are resolute: ties go to the lower project index.

mod completion;
mod greedy;
pub mod knapsack;
mod mes;
mod phragmen;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use completion::{complete_with, leftover_instance, Completer};
pub use greedy::{greed_util, greedy_by_scores, greedy_in_order, popularity};
pub use mes::{complete_add1, equal_share, mes, mes_with_endowment, MesOutcome, Payment, VoterLedger};
pub use phragmen::{maximin_support, seq_phragmen, water_fill};

use crate::model::{project_values, Allocation, Instance, ModelError, Objective, Profile, Sat};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} requires approval ballots")]
    ApprovalOnly(&'static str),
    #[error("score vector has {got} entries, expected {expected}")]
    ScoreLength { got: usize, expected: usize },
    #[error("score for project {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("{0} completion applies to MES only")]
    UnsupportedCompletion(&'static str),
    #[error("scoring rule `{rule}` failed: {message}")]
    Scorer { rule: String, message: String },
}

/// A rule that assigns one real score per project; the allocation is the
/// greedy scan in descending score order.
pub trait ScoreRule: Send + Sync + fmt::Debug {
    fn label(&self) -> String;
    fn scores(&self, instance: &Instance, profile: &Profile) -> Result<Vec<f64>, RuleError>;
}

#[derive(Debug, Clone)]
pub enum Completion {
    /// raise MES endowments one major unit at a time
    Add1,
    /// Add1, then GreedUtil on the leftover
    Add1U,
    /// Add1, then MaxUtil on the leftover
    Add1UM,
    /// base rule, then a scoring rule on the leftover
    Scored(Arc<dyn ScoreRule>),
}

#[derive(Debug, Clone)]
pub enum RuleId {
    MaxUtil,
    GreedUtil,
    /// MES utility; `None` follows the evaluation objective.
    Mes(Option<Sat>),
    SeqPhrag,
    MaximinSupp,
    Scored(Arc<dyn ScoreRule>),
    Completed(Box<RuleId>, Completion),
}

impl RuleId {
    /// Parses the built-in rule names; scoring rules need loading and are
    /// built by the caller.
    pub fn builtin(name: &str) -> Option<RuleId> {
        let (base, completion) = match name.split_once("-add1") {
            Some((b, "")) => (b, Some(Completion::Add1)),
            Some((b, "u")) => (b, Some(Completion::Add1U)),
            Some((b, "um")) => (b, Some(Completion::Add1UM)),
            Some(_) => return None,
            None => (name, None),
        };
        let base = match base {
            "max-util" => RuleId::MaxUtil,
            "greed-util" => RuleId::GreedUtil,
            "mes" => RuleId::Mes(None),
            "mes-card" => RuleId::Mes(Some(Sat::Card)),
            "mes-cost" => RuleId::Mes(Some(Sat::Cost)),
            "seq-phrag" => RuleId::SeqPhrag,
            "maximin-supp" => RuleId::MaximinSupp,
            _ => return None,
        };
        match completion {
            None => Some(base),
            Some(c) if matches!(base, RuleId::Mes(_)) => Some(RuleId::Completed(Box::new(base), c)),
            Some(_) => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            RuleId::MaxUtil => "max-util".into(),
            RuleId::GreedUtil => "greed-util".into(),
            RuleId::Mes(None) => "mes".into(),
            RuleId::Mes(Some(Sat::Card)) => "mes-card".into(),
            RuleId::Mes(Some(Sat::Cost)) => "mes-cost".into(),
            RuleId::SeqPhrag => "seq-phrag".into(),
            RuleId::MaximinSupp => "maximin-supp".into(),
            RuleId::Scored(r) => r.label(),
            RuleId::Completed(base, c) => match c {
                Completion::Add1 => format!("{}-add1", base.name()),
                Completion::Add1U => format!("{}-add1u", base.name()),
                Completion::Add1UM => format!("{}-add1um", base.name()),
                Completion::Scored(r) => format!("{}+{}", base.name(), r.label()),
            },
        }
    }

    pub fn is_approval_only(&self) -> bool {
        match self {
            RuleId::SeqPhrag | RuleId::MaximinSupp => true,
            RuleId::Completed(base, _) => base.is_approval_only(),
            _ => false,
        }
    }

    pub fn run(&self, instance: &Instance, profile: &Profile, objective: Objective) -> Result<Allocation, RuleError> {
        objective.check(profile)?;
        match self {
            RuleId::MaxUtil => max_util(instance, profile, objective),
            RuleId::GreedUtil => Ok(greed_util(instance, profile)),
            RuleId::Mes(sat) => mes(instance, profile, mes_utility(*sat, objective)),
            RuleId::SeqPhrag => seq_phragmen(instance, profile),
            RuleId::MaximinSupp => maximin_support(instance, profile),
            RuleId::Scored(rule) => greedy_by_scores(instance, &rule.scores(instance, profile)?),
            RuleId::Completed(base, completion) => {
                let add1 = |label| match **base {
                    RuleId::Mes(sat) => complete_add1(instance, profile, mes_utility(sat, objective)),
                    _ => Err(RuleError::UnsupportedCompletion(label)),
                };
                match completion {
                    Completion::Add1 => add1("add1"),
                    Completion::Add1U => {
                        complete_with(&add1("add1u")?, &Completer::GreedUtil, instance, profile, objective)
                    }
                    Completion::Add1UM => {
                        complete_with(&add1("add1um")?, &Completer::MaxUtil, instance, profile, objective)
                    }
                    Completion::Scored(rule) => {
                        let start = base.run(instance, profile, objective)?;
                        complete_with(&start, &Completer::Scored(rule.clone()), instance, profile, objective)
                    }
                }
            }
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A fixed MES satisfaction only applies to approval ballots; cardinal
/// profiles always use their scores.
fn mes_utility(sat: Option<Sat>, objective: Objective) -> Objective {
    match (sat, objective) {
        (Some(s), Objective::ApprovalSat(_)) => Objective::ApprovalSat(s),
        _ => objective,
    }
}

/// Exact utilitarian welfare maximizer; ties go to the lexicographically
/// smallest sorted project sequence.
pub fn max_util(instance: &Instance, profile: &Profile, objective: Objective) -> Result<Allocation, RuleError> {
    let items: Vec<knapsack::Item> = project_values(instance, profile, objective)?
        .into_iter()
        .enumerate()
        .map(|(p, value)| knapsack::Item { cost: instance.cost(p), value })
        .collect();
    let (chosen, _) = knapsack::solve(&items, instance.budget());
    Ok(Allocation::new(instance, chosen)?)
}

/// The fixed baseline line-up for a ballot kind.
pub fn baselines(kind: crate::model::BallotKind) -> Vec<RuleId> {
    use crate::model::BallotKind;
    let mut names = vec!["max-util", "greed-util"];
    match kind {
        BallotKind::Approval => names.extend([
            "mes-cost",
            "mes-cost-add1",
            "mes-cost-add1u",
            "mes-cost-add1um",
            "mes-card",
            "mes-card-add1",
            "mes-card-add1u",
            "mes-card-add1um",
            "seq-phrag",
            "maximin-supp",
        ]),
        BallotKind::Cardinal => names.extend(["mes", "mes-add1", "mes-add1u", "mes-add1um"]),
    }
    names.into_iter().map(|n| RuleId::builtin(n).expect("known rule name")).collect()
}
