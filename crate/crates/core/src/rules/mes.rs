//! Method of Equal Shares and the Add1 endowment-raising completion.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::Serialize;

use super::RuleError;
use crate::model::{rat_int, Allocation, Ballots, Instance, Objective, Profile, Rat, Sat, MINOR_PER_MAJOR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Payment {
    pub voter: usize,
    pub project: usize,
    pub amount: Rat,
}

/// Per-voter balances plus a log of every payment made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoterLedger {
    balances: Vec<Rat>,
    payments: Vec<Payment>,
}

impl VoterLedger {
    pub fn new(num_voters: usize, endowment: Rat) -> Self {
        Self { balances: vec![endowment; num_voters], payments: Vec::new() }
    }

    pub fn balances(&self) -> &[Rat] {
        &self.balances
    }

    pub fn payments(&self) -> &[Payment] {
        &self.payments
    }

    pub fn paid_for(&self, project: usize) -> Rat {
        self.payments.iter().filter(|p| p.project == project).map(|p| p.amount.clone()).sum()
    }

    pub fn total_paid(&self) -> Rat {
        self.payments.iter().map(|p| p.amount.clone()).sum()
    }

    fn charge(&mut self, voter: usize, project: usize, amount: Rat) {
        debug_assert!(amount <= self.balances[voter]);
        if amount.is_zero() {
            return;
        }
        self.balances[voter] -= &amount;
        self.payments.push(Payment { voter, project, amount });
    }
}

#[derive(Debug, Clone)]
pub struct MesOutcome {
    /// May exceed the budget when the endowment was raised above b/n.
    pub allocation: Allocation,
    pub ledger: VoterLedger,
    /// (project, ρ) in purchase order
    pub purchases: Vec<(usize, Rat)>,
}

/// u_i(p) for every voter with positive utility, per project.
fn supporters(instance: &Instance, profile: &Profile, utility: Objective) -> Result<Vec<Vec<(usize, Rat)>>, RuleError> {
    utility.check(profile)?;
    let m = instance.num_projects();
    let mut out = vec![Vec::new(); m];
    match (utility, profile.ballots()) {
        (Objective::ApprovalSat(sat), Ballots::Approval(ballots)) => {
            for (i, ballot) in ballots.iter().enumerate() {
                for &p in ballot {
                    let u = match sat {
                        Sat::Card => rat_int(1),
                        Sat::Cost => rat_int(instance.cost(p)),
                    };
                    out[p].push((i, u));
                }
            }
        }
        (_, Ballots::Cardinal(ballots)) => {
            for (i, ballot) in ballots.iter().enumerate() {
                for (p, s) in ballot.iter().enumerate() {
                    if s.is_positive() {
                        out[p].push((i, s.clone()));
                    }
                }
            }
        }
        _ => unreachable!("objective checked against profile"),
    }
    Ok(out)
}

/// Least ρ with Σ_i min(balance_i, ρ·u_i) = cost, voter by voter. The
/// reference for the grouped search below.
#[cfg(test)]
fn min_rho(cost: &Rat, supporters: &[(usize, Rat)], balances: &[Rat]) -> Option<Rat> {
    let total: Rat = supporters.iter().map(|(i, _)| balances[*i].clone()).sum();
    if total < *cost || supporters.is_empty() {
        return None;
    }
    let mut by_ratio: Vec<(Rat, &Rat, &Rat)> = supporters
        .iter()
        .map(|(i, u)| (&balances[*i] / u, &balances[*i], u))
        .collect();
    by_ratio.sort_by(|a, b| a.0.cmp(&b.0));
    let mut paid = Rat::zero();
    let mut util_left: Rat = supporters.iter().map(|(_, u)| u.clone()).sum();
    let mut last = None;
    for (ratio, balance, u) in by_ratio {
        let rho = (cost - &paid) / &util_left;
        if rho <= ratio {
            return Some(rho);
        }
        paid += balance;
        util_left -= u;
        last = Some(ratio);
    }
    last
}

/// Supporters sharing a balance and a utility.
struct Group<'a> {
    balance: &'a Rat,
    utility: &'a Rat,
    count: usize,
}

/// Least ρ with Σ_groups count·min(balance, ρ·u) = cost. Splitting a group
/// into its members gives the same answer: once ρ exceeds a member's
/// balance/u it exceeds it for every member with that ratio.
fn min_rho_grouped(cost: &Rat, groups: &[Group]) -> Option<Rat> {
    let total: Rat = groups.iter().map(|g| g.balance * rat_int(g.count)).sum();
    if total < *cost || groups.is_empty() {
        return None;
    }
    let mut by_ratio: Vec<(Rat, &Group)> = groups.iter().map(|g| (g.balance / g.utility, g)).collect();
    by_ratio.sort_by(|a, b| a.0.cmp(&b.0));
    let mut paid = Rat::zero();
    let mut util_left: Rat = groups.iter().map(|g| g.utility * rat_int(g.count)).sum();
    let mut last = None;
    for (ratio, g) in by_ratio {
        let rho = (cost - &paid) / &util_left;
        if rho <= ratio {
            return Some(rho);
        }
        paid += g.balance * rat_int(g.count);
        util_left -= g.utility * rat_int(g.count);
        last = Some(ratio);
    }
    // total == cost exactly and every supporter pays their whole balance
    last
}

/// One project's supporters as (voter, index into `utilities`).
struct Backing {
    utilities: Vec<Rat>,
    members: Vec<(usize, usize)>,
}

impl Backing {
    fn new(supporters: &[(usize, Rat)]) -> Self {
        let mut index: BTreeMap<&Rat, usize> = BTreeMap::new();
        let mut utilities = Vec::new();
        let members = supporters
            .iter()
            .map(|(i, u)| {
                let k = *index.entry(u).or_insert_with(|| {
                    utilities.push(u.clone());
                    utilities.len() - 1
                });
                (*i, k)
            })
            .collect();
        Self { utilities, members }
    }

    /// Member counts per (balance class, utility index), in key order.
    fn tally(&self, class_of: &[usize]) -> BTreeMap<(usize, usize), usize> {
        let mut t = BTreeMap::new();
        for &(i, k) in &self.members {
            *t.entry((class_of[i], k)).or_insert(0) += 1;
        }
        t
    }
}

/// MES with a given per-voter endowment (in minor units).
///
/// Voters with the same payment history hold the same balance, so they are
/// tracked as balance classes and ρ is searched over (class, utility)
/// groups instead of single voters.
pub fn mes_with_endowment(
    instance: &Instance,
    profile: &Profile,
    utility: Objective,
    endowment: &Rat,
) -> Result<MesOutcome, RuleError> {
    let support = supporters(instance, profile, utility)?;
    let backing: Vec<Backing> = support.iter().map(|s| Backing::new(s)).collect();
    let m = instance.num_projects();
    let costs: Vec<Rat> = (0..m).map(|p| rat_int(instance.cost(p))).collect();
    let mut ledger = VoterLedger::new(profile.num_voters(), endowment.clone());
    let mut class_balance: Vec<Rat> = vec![endowment.clone()];
    let mut class_of: Vec<usize> = vec![0; profile.num_voters()];
    let mut purchases = Vec::new();

    // ρ(p) never decreases as balances shrink, so the last computed value is
    // a lower bound; a project that is unaffordable stays unaffordable.
    let mut lower: Vec<Rat> = vec![Rat::zero(); m];
    let mut live: Vec<usize> = (0..m).filter(|&p| !support[p].is_empty()).collect();

    loop {
        live.sort_by(|&a, &b| lower[a].cmp(&lower[b]).then(a.cmp(&b)));
        let mut best: Option<(Rat, usize)> = None;
        let mut dead = Vec::new();
        for &p in &live {
            if let Some((ref r, q)) = best {
                if lower[p] > *r || (lower[p] == *r && p > q) {
                    break;
                }
            }
            let tally = backing[p].tally(&class_of);
            let groups: Vec<Group> = tally
                .iter()
                .map(|(&(c, k), &count)| Group { balance: &class_balance[c], utility: &backing[p].utilities[k], count })
                .collect();
            match min_rho_grouped(&costs[p], &groups) {
                None => dead.push(p),
                Some(rho) => {
                    let better = match &best {
                        None => true,
                        Some((r, q)) => rho < *r || (rho == *r && p < *q),
                    };
                    lower[p] = rho.clone();
                    if better {
                        best = Some((rho, p));
                    }
                }
            }
        }
        live.retain(|p| !dead.contains(p));
        let Some((rho, p)) = best else { break };
        // each (class, utility) group pays the same and moves to a new class
        let mut moved: BTreeMap<(usize, usize), (usize, Rat)> = BTreeMap::new();
        for (c, k) in backing[p].tally(&class_of).into_keys() {
            let share = &rho * &backing[p].utilities[k];
            let pay = if share < class_balance[c] { share } else { class_balance[c].clone() };
            let target = if pay.is_zero() {
                c
            } else {
                class_balance.push(&class_balance[c] - &pay);
                class_balance.len() - 1
            };
            moved.insert((c, k), (target, pay));
        }
        for &(i, k) in &backing[p].members {
            let (target, pay) = &moved[&(class_of[i], k)];
            ledger.charge(i, p, pay.clone());
            class_of[i] = *target;
        }
        debug_assert_eq!(ledger.paid_for(p), costs[p]);
        purchases.push((p, rho));
        live.retain(|&q| q != p);
    }

    let allocation = Allocation::unchecked(instance, purchases.iter().map(|(p, _)| *p))?;
    Ok(MesOutcome { allocation, ledger, purchases })
}

pub fn equal_share(instance: &Instance, profile: &Profile) -> Rat {
    Rat::new(instance.budget().into(), (profile.num_voters() as u64).into())
}

/// Plain MES: endowment b/n. Never overspends and is generally not exhaustive.
pub fn mes(instance: &Instance, profile: &Profile, utility: Objective) -> Result<Allocation, RuleError> {
    Ok(mes_with_endowment(instance, profile, utility, &equal_share(instance, profile))?.allocation)
}

/// Raises every voter's endowment by one major currency unit at a time
/// until the outcome is exhaustive (returned) or overspends (the previous
/// outcome is returned). Projects without a supporter do not count
/// against exhaustiveness here since MES never buys them.
pub fn complete_add1(instance: &Instance, profile: &Profile, utility: Objective) -> Result<Allocation, RuleError> {
    let base = equal_share(instance, profile);
    let step = rat_int(MINOR_PER_MAJOR);
    let buyable: Vec<bool> = supporters(instance, profile, utility)?.iter().map(|s| !s.is_empty()).collect();
    let mut endowment = base;
    let mut previous: Option<Allocation> = None;
    loop {
        let outcome = mes_with_endowment(instance, profile, utility, &endowment)?.allocation;
        if !outcome.is_feasible(instance) {
            return Ok(previous.expect("MES at b/n never overspends"));
        }
        // projects nobody values are out of reach at any endowment
        let left = instance.budget() - outcome.total_cost();
        let stuck = (0..instance.num_projects())
            .all(|p| outcome.contains(p) || instance.cost(p) > left || !buyable[p]);
        if stuck {
            return Ok(outcome);
        }
        previous = Some(outcome);
        endowment += &step;
    }
}
