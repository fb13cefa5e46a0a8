use std::cmp::Ordering;

use super::RuleError;
use crate::model::{rat_int, Allocation, BallotKind, Instance, Money, Profile, Rat};

/// Scans `order`, taking every project that still fits. Unaffordable
/// projects are skipped, not a stopping point.
pub fn greedy_in_order(instance: &Instance, order: impl IntoIterator<Item = usize>, budget: Money) -> Vec<usize> {
    let mut left = budget;
    let mut taken = Vec::new();
    for p in order {
        let c = instance.cost(p);
        if c <= left {
            left -= c;
            taken.push(p);
        }
    }
    taken
}

/// Candidates sorted by score descending, ties by ascending index.
fn order_by<T>(candidates: &[usize], scores: &[T], cmp: impl Fn(&T, &T) -> Ordering) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| cmp(&scores[b], &scores[a]).then(a.cmp(&b)));
    order
}

/// Approval count for approval ballots (under either satisfaction function),
/// total score for cardinal ballots.
pub fn popularity(profile: &Profile) -> Vec<Rat> {
    match profile.kind() {
        BallotKind::Approval => profile.approval_counts().into_iter().map(rat_int).collect(),
        BallotKind::Cardinal => profile.score_sums(),
    }
}

pub fn greed_util(instance: &Instance, profile: &Profile) -> Allocation {
    let all: Vec<usize> = (0..instance.num_projects()).collect();
    let taken = greed_util_among(instance, profile, &all, instance.budget());
    Allocation::new(instance, taken).expect("greedy never exceeds the budget")
}

pub(crate) fn greed_util_among(instance: &Instance, profile: &Profile, candidates: &[usize], budget: Money) -> Vec<usize> {
    let pop = popularity(profile);
    greedy_in_order(instance, order_by(candidates, &pop, Ord::cmp), budget)
}

fn check_scores(scores: &[f64], m: usize) -> Result<(), RuleError> {
    if scores.len() != m {
        return Err(RuleError::ScoreLength { got: scores.len(), expected: m });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(RuleError::NonFiniteScore { index });
    }
    Ok(())
}

/// Greedy by externally supplied scores, e.g. from an evolved expression.
pub fn greedy_by_scores(instance: &Instance, scores: &[f64]) -> Result<Allocation, RuleError> {
    let all: Vec<usize> = (0..instance.num_projects()).collect();
    let taken = greedy_by_scores_among(instance, scores, &all, instance.budget())?;
    Ok(Allocation::new(instance, taken)?)
}

/// `scores[k]` belongs to `candidates[k]`.
pub(crate) fn greedy_by_scores_among(
    instance: &Instance,
    scores: &[f64],
    candidates: &[usize],
    budget: Money,
) -> Result<Vec<usize>, RuleError> {
    check_scores(scores, candidates.len())?;
    let positions: Vec<usize> = (0..candidates.len()).collect();
    // finite, so partial_cmp is total; -0.0 and 0.0 tie
    let order = order_by(&positions, scores, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(greedy_in_order(instance, order.into_iter().map(|k| candidates[k]), budget))
}
