//! Exhaustive Strong-EJR / EJR / PJR checkers.
//!
//! These enumerate every project set P and every voter subset N, so they are
//! exponential in both n and m and refuse inputs beyond a small guard. They
//! exist to cross-check [`super::verify_strong_ejr_maximal`] and to answer
//! EJR and PJR questions, for which no maximal-group shortcut exists.
//!
//! For cardinal ballots the lower-bound function α is fixed per P to the
//! least score that any voter backing all of P gives each project (the
//! floor of the maximal group). With α chosen per subset N instead, a small
//! high-scoring subgroup could demand more than the maximal group and the
//! maximal-group reduction would not hold.

use num_traits::{Signed, Zero};

use super::FairnessError;
use crate::model::{rat_int, sat_value, Allocation, Ballots, Instance, Objective, Profile, Rat};

pub const MAX_VOTERS: usize = 12;
pub const MAX_PROJECTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quantifier {
    /// every member meets the bound
    Strong,
    /// some member meets the bound
    Ejr,
    /// the group's pooled satisfaction meets the bound
    Pjr,
}

pub fn verify_strong_ejr_bruteforce(
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
) -> Result<bool, FairnessError> {
    check_all_groups(instance, profile, allocation, objective, Quantifier::Strong)
}

pub fn verify_ejr_bruteforce(
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
) -> Result<bool, FairnessError> {
    check_all_groups(instance, profile, allocation, objective, Quantifier::Ejr)
}

pub fn verify_pjr_bruteforce(
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
) -> Result<bool, FairnessError> {
    check_all_groups(instance, profile, allocation, objective, Quantifier::Pjr)
}

pub fn within_guard(instance: &Instance, profile: &Profile) -> bool {
    profile.num_voters() <= MAX_VOTERS && instance.num_projects() <= MAX_PROJECTS
}

fn check_all_groups(
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
    quantifier: Quantifier,
) -> Result<bool, FairnessError> {
    objective.check(profile)?;
    let n = profile.num_voters();
    let m = instance.num_projects();
    if !within_guard(instance, profile) {
        return Err(FairnessError::GuardExceeded { n, m, max_n: MAX_VOTERS, max_m: MAX_PROJECTS });
    }
    let budget = instance.budget() as u128;

    for pmask in 1u32..(1 << m) {
        let projects: Vec<usize> = (0..m).filter(|p| pmask >> p & 1 == 1).collect();
        let cost: u128 = projects.iter().map(|&p| instance.cost(p) as u128).sum();
        let backers: Vec<usize> = (0..n)
            .filter(|&i| projects.iter().all(|&p| profile.score(i, p).is_positive()))
            .collect();
        let bound = demand(&projects, &backers, instance, profile, objective);

        for nmask in 1u32..(1 << n) {
            let group: Vec<usize> = (0..n).filter(|i| nmask >> i & 1 == 1).collect();
            // cohesive: every member backs all of P and |N|/n · b ≥ c(P)
            let backs_all = group
                .iter()
                .all(|&i| projects.iter().all(|&p| profile.score(i, p).is_positive()));
            if !backs_all || (group.len() as u128) * budget < (n as u128) * cost {
                continue;
            }
            let ok = match quantifier {
                Quantifier::Strong => group
                    .iter()
                    .all(|&i| utility(i, instance, profile, allocation, objective) >= bound),
                Quantifier::Ejr => group
                    .iter()
                    .any(|&i| utility(i, instance, profile, allocation, objective) >= bound),
                Quantifier::Pjr => pooled_utility(&group, instance, profile, allocation, objective) >= bound,
            };
            if !ok {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn demand(projects: &[usize], backers: &[usize], instance: &Instance, profile: &Profile, objective: Objective) -> Rat {
    match objective {
        Objective::ApprovalSat(sat) => rat_int(sat_value(sat, projects.iter().copied(), instance)),
        Objective::CardinalUtility => projects
            .iter()
            .map(|&p| {
                backers
                    .iter()
                    .map(|&i| profile.score(i, p))
                    .min()
                    .unwrap_or_else(Rat::zero)
            })
            .sum(),
    }
}

fn utility(i: usize, instance: &Instance, profile: &Profile, allocation: &Allocation, objective: Objective) -> Rat {
    match (objective, profile.ballots()) {
        (Objective::ApprovalSat(sat), Ballots::Approval(b)) => rat_int(sat_value(
            sat,
            b[i].iter().copied().filter(|&p| allocation.contains(p)),
            instance,
        )),
        _ => allocation.selected().iter().map(|&p| profile.score(i, p)).sum(),
    }
}

/// Approval: sat of the union of members' approved selected projects.
/// Cardinal: Σ_{p∈π} max_{i∈N} A_i(p).
fn pooled_utility(group: &[usize], instance: &Instance, profile: &Profile, allocation: &Allocation, objective: Objective) -> Rat {
    match objective {
        Objective::ApprovalSat(sat) => {
            let covered = allocation
                .selected()
                .iter()
                .copied()
                .filter(|&p| group.iter().any(|&i| profile.supports(i, p)));
            rat_int(sat_value(sat, covered, instance))
        }
        Objective::CardinalUtility => allocation
            .selected()
            .iter()
            .map(|&p| group.iter().map(|&i| profile.score(i, p)).max().unwrap_or_else(Rat::zero))
            .sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rat, Sat};

    const CARD: Objective = Objective::ApprovalSat(Sat::Card);

    #[test]
    fn two_group_instance_fails_strong_and_ejr() {
        let inst = Instance::from_costs(&[50, 50], 100).unwrap();
        let prof = Profile::approval(2, vec![vec![0], vec![0], vec![1], vec![1]]).unwrap();
        let pi = Allocation::new(&inst, [0]).unwrap();
        assert!(!verify_strong_ejr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
        assert!(!verify_ejr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
        assert!(!verify_pjr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
    }

    #[test]
    fn no_group_is_vacuous() {
        let inst = Instance::from_costs(&[60], 100).unwrap();
        let prof = Profile::approval(1, vec![vec![0], vec![]]).unwrap();
        assert!(verify_strong_ejr_bruteforce(&inst, &prof, &Allocation::empty(), CARD).unwrap());
    }

    #[test]
    fn empty_allocation_fails_with_a_group() {
        let inst = Instance::from_costs(&[50], 100).unwrap();
        let prof = Profile::approval(1, vec![vec![0], vec![]]).unwrap();
        assert!(!verify_strong_ejr_bruteforce(&inst, &prof, &Allocation::empty(), CARD).unwrap());
    }

    #[test]
    fn ejr_holds_when_one_member_served() {
        let inst = Instance::from_costs(&[50, 50], 100).unwrap();
        let prof = Profile::approval(2, vec![vec![0], vec![0, 1]]).unwrap();
        // P={p0} group {0,1}; π = {p1} serves only voter 1
        let pi = Allocation::new(&inst, [1]).unwrap();
        assert!(!verify_strong_ejr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
        // the singleton {0} is cohesive for {p0} too (1/2·100 ≥ 50) and is unserved
        assert!(!verify_ejr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
        let pi = Allocation::new(&inst, [0]).unwrap();
        assert!(verify_ejr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
    }

    #[test]
    fn pjr_pools_members() {
        // group {0,1} on P = {a, b}; π = {a} gives the pooled group sat 1 < 2.
        let inst = Instance::from_costs(&[10, 10, 10], 20).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1], vec![0, 1]]).unwrap();
        let pi = Allocation::new(&inst, [0]).unwrap();
        assert!(!verify_pjr_bruteforce(&inst, &prof, &pi, CARD).unwrap());
    }

    #[test]
    fn cardinal_bound_uses_backer_floor() {
        // Voters 0 and 1 both score p0; the floor is 1/10. π = {p1} gives
        // each 1/2, so Strong-EJR holds even though voter 0 values p0 at 1.
        let inst = Instance::from_costs(&[10, 15], 20).unwrap();
        let prof = Profile::cardinal(2, vec![vec![rat(1, 1), rat(1, 2)], vec![rat(1, 10), rat(1, 2)]]).unwrap();
        let pi = Allocation::new(&inst, [1]).unwrap();
        assert!(verify_strong_ejr_bruteforce(&inst, &prof, &pi, Objective::CardinalUtility).unwrap());
    }

    #[test]
    fn guard_refuses_large_inputs() {
        let inst = Instance::from_costs(&[1; 7], 3).unwrap();
        let prof = Profile::approval(7, vec![vec![0]]).unwrap();
        assert!(matches!(
            verify_ejr_bruteforce(&inst, &prof, &Allocation::empty(), CARD),
            Err(FairnessError::GuardExceeded { .. })
        ));
    }
}
