//! Strong-EJR verification over maximal cohesive groups, the Strong-EJR
//! approximation φ, and normalized welfare.
//!
//! Only the maximal group of each P needs checking: if every member of
//! N^max meets its bound, every member of any cohesive N ⊆ N^max does too.
//! The exhaustive checkers in [`oracle`] enumerate all groups instead.

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::cohesion::{CohesiveGroup, GroupIndex};
use crate::model::{
    rat_int, rat_to_f64, sat_value, Allocation, Ballots, Instance, ModelError, Objective, Profile, Rat,
};

pub mod oracle;

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("strong-EJR verification needs the full group index, got one truncated at {0}")]
    TruncatedIndex(usize),
    #[error("brute-force check refused: n = {n}, m = {m} exceed the guard (n <= {max_n}, m <= {max_m})")]
    GuardExceeded { n: usize, m: usize, max_n: usize, max_m: usize },
    #[error("allocation welfare {welfare} exceeds the supplied optimum {optimum}")]
    WelfareAboveOptimum { welfare: f64, optimum: f64 },
    #[error("optimal welfare must be positive")]
    ZeroOptimum,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub phi: f64,
    /// (position in the group index, clamped worst-member ratio)
    pub per_group: Vec<(usize, f64)>,
    pub strong_ejr: bool,
    pub groups_considered: usize,
    /// No cohesive group exists, so φ = 1 holds trivially.
    pub vacuous: bool,
}

/// Each voter's utility for the allocation: sat_i(π) or Σ_{p∈π} A_i(p).
#[derive(Debug, Clone)]
pub enum VoterUtilities {
    Approval(Vec<u64>),
    Cardinal(Vec<Rat>),
}

impl VoterUtilities {
    pub fn compute(
        instance: &Instance,
        profile: &Profile,
        allocation: &Allocation,
        objective: Objective,
    ) -> Result<Self, ModelError> {
        objective.check(profile)?;
        Ok(match (objective, profile.ballots()) {
            (Objective::ApprovalSat(sat), Ballots::Approval(b)) => VoterUtilities::Approval(
                b.iter()
                    .map(|ballot| sat_value(sat, ballot.iter().copied().filter(|&p| allocation.contains(p)), instance))
                    .collect(),
            ),
            (Objective::CardinalUtility, Ballots::Cardinal(b)) => VoterUtilities::Cardinal(
                b.iter()
                    .map(|ballot| allocation.selected().iter().map(|&p| &ballot[p]).sum())
                    .collect(),
            ),
            _ => unreachable!("objective checked against profile kind"),
        })
    }
}

/// What each member of the group is owed: sat(P) for approval ballots,
/// Σ_{p∈P} min_{i∈N^max} A_i(p) for cardinal ones.
pub fn group_demand(group: &CohesiveGroup, instance: &Instance, objective: Objective) -> Rat {
    match objective {
        Objective::ApprovalSat(sat) => rat_int(sat_value(sat, group.projects.iter().copied(), instance)),
        Objective::CardinalUtility => group.alpha_floor.iter().sum(),
    }
}

/// Worst member's utility over demand, before clamping.
fn worst_ratio(group: &CohesiveGroup, demand: &Rat, utilities: &VoterUtilities) -> Rat {
    debug_assert!(demand.is_positive());
    match utilities {
        VoterUtilities::Approval(u) => {
            let worst = group.members.iter().map(|&i| u[i]).min().unwrap_or(0);
            rat_int(worst) / demand
        }
        VoterUtilities::Cardinal(u) => {
            let worst = group.members.iter().map(|&i| &u[i]).min().cloned().unwrap_or_else(Rat::zero);
            worst / demand
        }
    }
}

/// min over members of min(1, utility / demand).
pub fn group_ratio(
    group: &CohesiveGroup,
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
) -> Result<Rat, FairnessError> {
    let utilities = VoterUtilities::compute(instance, profile, allocation, objective)?;
    let demand = group_demand(group, instance, objective);
    Ok(worst_ratio(group, &demand, &utilities).min(Rat::one()))
}

/// φ over the first min(s, σ) groups of the index.
pub fn strong_ejr_approx(
    index: &GroupIndex,
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
    sigma: usize,
) -> Result<FairnessReport, FairnessError> {
    let utilities = VoterUtilities::compute(instance, profile, allocation, objective)?;
    strong_ejr_approx_with(index, instance, &utilities, objective, sigma)
}

/// Same as [`strong_ejr_approx`] with voter utilities already computed.
pub fn strong_ejr_approx_with(
    index: &GroupIndex,
    instance: &Instance,
    utilities: &VoterUtilities,
    objective: Objective,
    sigma: usize,
) -> Result<FairnessReport, FairnessError> {
    let considered = &index.groups()[..index.len().min(sigma)];
    if considered.is_empty() {
        return Ok(FairnessReport {
            phi: 1.0,
            per_group: Vec::new(),
            strong_ejr: true,
            groups_considered: 0,
            vacuous: true,
        });
    }
    let mut sum = Rat::zero();
    let mut strong_ejr = true;
    let mut per_group = Vec::with_capacity(considered.len());
    for (pos, group) in considered.iter().enumerate() {
        let demand = group_demand(group, instance, objective);
        let ratio = worst_ratio(group, &demand, utilities);
        if ratio < Rat::one() {
            strong_ejr = false;
        }
        let clamped = ratio.min(Rat::one());
        per_group.push((pos, rat_to_f64(&clamped)));
        sum += clamped;
    }
    let mean = sum / rat_int(considered.len());
    Ok(FairnessReport {
        phi: rat_to_f64(&mean),
        per_group,
        strong_ejr,
        groups_considered: considered.len(),
        vacuous: false,
    })
}

/// Strong-EJR via maximal groups. The index must be complete.
pub fn verify_strong_ejr_maximal(
    index: &GroupIndex,
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
) -> Result<bool, FairnessError> {
    if let Some(sigma) = index.truncated_at() {
        return Err(FairnessError::TruncatedIndex(sigma));
    }
    let utilities = VoterUtilities::compute(instance, profile, allocation, objective)?;
    Ok(index.groups().iter().all(|g| {
        let demand = group_demand(g, instance, objective);
        worst_ratio(g, &demand, &utilities) >= Rat::one()
    }))
}

/// ω(π) / ω(π^OPT).
pub fn normalized_welfare(welfare: &Rat, optimal_welfare: &Rat) -> Result<f64, FairnessError> {
    if !optimal_welfare.is_positive() {
        return Err(FairnessError::ZeroOptimum);
    }
    if welfare > optimal_welfare {
        return Err(FairnessError::WelfareAboveOptimum {
            welfare: rat_to_f64(welfare),
            optimum: rat_to_f64(optimal_welfare),
        });
    }
    Ok(rat_to_f64(&(welfare / optimal_welfare)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohesion::mine_cohesive_groups;
    use crate::model::{rat, Sat};

    const CARD: Objective = Objective::ApprovalSat(Sat::Card);

    fn two_groups() -> (Instance, Profile) {
        let inst = Instance::from_costs(&[50, 50], 100).unwrap();
        let prof = Profile::approval(2, vec![vec![0], vec![0], vec![1], vec![1]]).unwrap();
        (inst, prof)
    }

    #[test]
    fn two_group_phi_is_half() {
        let (inst, prof) = two_groups();
        let idx = mine_cohesive_groups(&inst, &prof);
        let pi = Allocation::new(&inst, [0]).unwrap();
        let rep = strong_ejr_approx(&idx, &inst, &prof, &pi, CARD, 100).unwrap();
        assert_eq!(rep.phi, 0.5);
        assert_eq!(rep.per_group, vec![(0, 1.0), (1, 0.0)]);
        assert!(!rep.strong_ejr);
        assert!(!verify_strong_ejr_maximal(&idx, &inst, &prof, &pi, CARD).unwrap());
    }

    #[test]
    fn containment_gives_ratio_one() {
        let (inst, prof) = two_groups();
        let idx = mine_cohesive_groups(&inst, &prof);
        let pi = Allocation::new(&inst, [0, 1]).unwrap();
        for g in idx.groups() {
            assert_eq!(group_ratio(g, &inst, &prof, &pi, CARD).unwrap(), rat(1, 1));
        }
        assert!(verify_strong_ejr_maximal(&idx, &inst, &prof, &pi, CARD).unwrap());
    }

    #[test]
    fn zero_numerator() {
        let (inst, prof) = two_groups();
        let idx = mine_cohesive_groups(&inst, &prof);
        let pi = Allocation::new(&inst, [1]).unwrap();
        assert_eq!(group_ratio(&idx.groups()[0], &inst, &prof, &pi, CARD).unwrap(), rat(0, 1));
    }

    #[test]
    fn served_through_other_projects() {
        // One group on {p0,p1} (demand 2 under sat^card); π gives each member
        // two approved projects without containing P.
        let inst = Instance::from_costs(&[10, 10, 10, 10], 25).unwrap();
        let prof = Profile::approval(4, vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let pi = Allocation::new(&inst, [2, 3]).unwrap();
        assert!(verify_strong_ejr_maximal(&idx, &inst, &prof, &pi, CARD).unwrap());
    }

    #[test]
    fn single_group_met_exactly() {
        let inst = Instance::from_costs(&[40, 70], 100).unwrap();
        let prof = Profile::approval(2, vec![vec![0], vec![0, 1]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        assert_eq!(idx.len(), 1);
        let pi = Allocation::new(&inst, [0]).unwrap();
        let rep = strong_ejr_approx(&idx, &inst, &prof, &pi, Objective::ApprovalSat(Sat::Cost), 100).unwrap();
        assert_eq!(rep.phi, 1.0);
        assert!(rep.strong_ejr);
    }

    #[test]
    fn empty_index_is_vacuous() {
        let inst = Instance::from_costs(&[60], 100).unwrap();
        let prof = Profile::approval(1, vec![vec![0], vec![]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let rep = strong_ejr_approx(&idx, &inst, &prof, &Allocation::empty(), CARD, 100).unwrap();
        assert!(rep.vacuous);
        assert_eq!(rep.phi, 1.0);
    }

    #[test]
    fn truncated_index_refused_by_verifier() {
        let inst = Instance::from_costs(&[30, 40, 50], 100).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1, 2]; 3]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof).truncate(2);
        let pi = Allocation::new(&inst, [0]).unwrap();
        assert!(matches!(
            verify_strong_ejr_maximal(&idx, &inst, &prof, &pi, CARD),
            Err(FairnessError::TruncatedIndex(2))
        ));
        // the approximation still accepts it
        assert_eq!(strong_ejr_approx(&idx, &inst, &prof, &pi, CARD, 100).unwrap().groups_considered, 2);
    }

    #[test]
    fn sigma_at_least_s_is_exhaustive() {
        let inst = Instance::from_costs(&[30, 40, 50], 100).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1], vec![0, 1, 2], vec![2]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let pi = Allocation::new(&inst, [2]).unwrap();
        let a = strong_ejr_approx(&idx, &inst, &prof, &pi, CARD, idx.len()).unwrap();
        let b = strong_ejr_approx(&idx, &inst, &prof, &pi, CARD, usize::MAX).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cardinal_ratio_uses_alpha_floor() {
        let inst = Instance::from_costs(&[10, 10], 40).unwrap();
        let prof = Profile::cardinal(2, vec![vec![rat(1, 2), rat(0, 1)], vec![rat(1, 4), rat(1, 8)]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let g0 = idx.groups().iter().find(|g| g.projects == vec![0]).unwrap();
        // demand 1/4; π = {p1}: voter 0 gets 0
        let pi = Allocation::new(&inst, [1]).unwrap();
        assert_eq!(group_ratio(g0, &inst, &prof, &pi, Objective::CardinalUtility).unwrap(), rat(0, 1));
        let pi = Allocation::new(&inst, [0]).unwrap();
        assert_eq!(group_ratio(g0, &inst, &prof, &pi, Objective::CardinalUtility).unwrap(), rat(1, 1));
    }

    #[test]
    fn normalized_welfare_examples() {
        assert_eq!(normalized_welfare(&rat(8, 1), &rat(10, 1)).unwrap(), 0.8);
        assert_eq!(normalized_welfare(&rat(10, 1), &rat(10, 1)).unwrap(), 1.0);
        assert_eq!(normalized_welfare(&rat(0, 1), &rat(10, 1)).unwrap(), 0.0);
        assert!(matches!(
            normalized_welfare(&rat(11, 1), &rat(10, 1)),
            Err(FairnessError::WelfareAboveOptimum { .. })
        ));
        assert!(matches!(normalized_welfare(&rat(0, 1), &rat(0, 1)), Err(FairnessError::ZeroOptimum)));
    }
}
