use std::sync::Arc;

use super::greedy::{greed_util_among, greedy_by_scores_among, greedy_in_order};
use super::knapsack::{self, Item};
use super::{RuleError, ScoreRule};
use crate::model::{project_values, Allocation, Instance, Objective, Profile};

/// Rule used to spend what a non-exhaustive base outcome leaves over.
#[derive(Debug, Clone)]
pub enum Completer {
    GreedUtil,
    MaxUtil,
    Scored(Arc<dyn ScoreRule>),
}

/// Unselected projects and the leftover budget as a standalone instance,
/// with the profile restricted to them.
pub fn leftover_instance(base: &Allocation, instance: &Instance, profile: &Profile) -> Option<(Instance, Profile, Vec<usize>)> {
    let left = instance.budget().checked_sub(base.total_cost())?;
    let keep: Vec<usize> = (0..instance.num_projects()).filter(|&p| !base.contains(p)).collect();
    if left == 0 || keep.is_empty() {
        return None;
    }
    let projects = keep.iter().map(|&p| {
        let pr = &instance.projects()[p];
        (pr.id.clone(), pr.cost)
    });
    let sub = Instance::new(projects, left).ok()?;
    Some((sub, profile.restrict(&keep), keep))
}

/// base ∪ completion(leftover instance). Returns `base` untouched when it is
/// already exhaustive.
pub fn complete_with(
    base: &Allocation,
    completer: &Completer,
    instance: &Instance,
    profile: &Profile,
    objective: Objective,
) -> Result<Allocation, RuleError> {
    if !base.is_feasible(instance) {
        return Err(crate::model::ModelError::Infeasible { cost: base.total_cost(), budget: instance.budget() }.into());
    }
    if base.is_exhaustive(instance) {
        return Ok(base.clone());
    }
    let left = instance.budget() - base.total_cost();
    let candidates: Vec<usize> = (0..instance.num_projects()).filter(|&p| !base.contains(p)).collect();
    let added = match completer {
        Completer::GreedUtil => greed_util_among(instance, profile, &candidates, left),
        Completer::MaxUtil => {
            let values = project_values(instance, profile, objective)?;
            let items: Vec<Item> = candidates
                .iter()
                .map(|&p| Item { cost: instance.cost(p), value: values[p].clone() })
                .collect();
            let mut chosen: Vec<usize> = knapsack::solve(&items, left).0.into_iter().map(|k| candidates[k]).collect();
            // the optimum may leave zero-value projects that still fit; taking
            // them keeps the welfare and makes the outcome exhaustive
            let spent: u64 = chosen.iter().map(|&p| instance.cost(p)).sum();
            let rest: Vec<usize> = candidates.iter().copied().filter(|p| !chosen.contains(p)).collect();
            chosen.extend(greedy_in_order(instance, rest, left - spent));
            chosen
        }
        Completer::Scored(rule) => {
            let (sub, sub_profile, keep) =
                leftover_instance(base, instance, profile).expect("non-exhaustive base leaves budget and projects");
            let scores = rule.scores(&sub, &sub_profile)?;
            greedy_by_scores_among(instance, &scores, &keep, left)?
        }
    };
    Ok(Allocation::new(instance, base.selected().iter().copied().chain(added))?)
}
