//! Sequential Phragmén and Maximin Support, both in their exhaustive form:
//! projects that no longer fit the remaining budget are skipped and the
//! scan continues.

use num_traits::Zero;

use super::RuleError;
use crate::model::{rat_int, Allocation, Ballots, Instance, Money, Profile, Rat};

fn approvers(instance: &Instance, profile: &Profile, rule: &'static str) -> Result<Vec<Vec<usize>>, RuleError> {
    let Ballots::Approval(ballots) = profile.ballots() else {
        return Err(RuleError::ApprovalOnly(rule));
    };
    let mut out = vec![Vec::new(); instance.num_projects()];
    for (i, ballot) in ballots.iter().enumerate() {
        for &p in ballot {
            out[p].push(i);
        }
    }
    Ok(out)
}

fn candidates<'a>(
    instance: &'a Instance,
    approvers: &'a [Vec<usize>],
    taken: &'a [bool],
    left: Money,
) -> impl Iterator<Item = usize> + 'a {
    (0..instance.num_projects()).filter(move |&p| !taken[p] && !approvers[p].is_empty() && instance.cost(p) <= left)
}

/// Voters earn money at unit rate; a project is bought at the first moment
/// its approvers jointly hold its cost, and their money is then spent.
pub fn seq_phragmen(instance: &Instance, profile: &Profile) -> Result<Allocation, RuleError> {
    let approvers = approvers(instance, profile, "seq-phrag")?;
    let m = instance.num_projects();
    // load_i: time at which voter i's money was last reset
    let mut load = vec![Rat::zero(); profile.num_voters()];
    let mut taken = vec![false; m];
    let mut left = instance.budget();
    let mut order = Vec::new();
    loop {
        let mut best: Option<(Rat, usize)> = None;
        for p in candidates(instance, &approvers, &taken, left) {
            let held: Rat = approvers[p].iter().map(|&i| load[i].clone()).sum();
            let t = (rat_int(instance.cost(p)) + held) / rat_int(approvers[p].len());
            if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                best = Some((t, p));
            }
        }
        let Some((t, p)) = best else { break };
        for &i in &approvers[p] {
            load[i] = t.clone();
        }
        taken[p] = true;
        left -= instance.cost(p);
        order.push(p);
    }
    Ok(Allocation::new(instance, order)?)
}

/// Spreads `cost` over voters with the given current loads so that the
/// highest resulting load among those who pay is as small as possible.
/// Returns that level and how many of the lowest-loaded voters pay.
pub fn water_fill(cost: &Rat, sorted_loads: &[&Rat]) -> (Rat, usize) {
    let mut sum = Rat::zero();
    for r in 1..=sorted_loads.len() {
        sum += sorted_loads[r - 1];
        let level = (cost + &sum) / rat_int(r);
        if r == sorted_loads.len() || level <= *sorted_loads[r] {
            return (level, r);
        }
    }
    unreachable!("water_fill needs at least one voter")
}

pub fn maximin_support(instance: &Instance, profile: &Profile) -> Result<Allocation, RuleError> {
    let approvers = approvers(instance, profile, "maximin-supp")?;
    let m = instance.num_projects();
    let mut load = vec![Rat::zero(); profile.num_voters()];
    let mut taken = vec![false; m];
    let mut left = instance.budget();
    let mut order = Vec::new();
    loop {
        let mut best: Option<(Rat, usize, Vec<usize>)> = None;
        for p in candidates(instance, &approvers, &taken, left) {
            let mut voters = approvers[p].clone();
            voters.sort_by(|&a, &b| load[a].cmp(&load[b]).then(a.cmp(&b)));
            let loads: Vec<&Rat> = voters.iter().map(|&i| &load[i]).collect();
            let (level, payers) = water_fill(&rat_int(instance.cost(p)), &loads);
            if best.as_ref().is_none_or(|(bl, _, _)| level < *bl) {
                voters.truncate(payers);
                best = Some((level, p, voters));
            }
        }
        let Some((level, p, payers)) = best else { break };
        for i in payers {
            load[i] = level.clone();
        }
        taken[p] = true;
        left -= instance.cost(p);
        order.push(p);
    }
    Ok(Allocation::new(instance, order)?)
}
