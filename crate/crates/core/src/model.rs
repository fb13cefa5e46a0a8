//! Domain model: PB instances, ballot profiles, allocations and welfare.
//!
//! Money is kept in integer minor units and cardinal scores as exact
//! rationals, so every comparison made by the rules and fairness checks is
//! free of rounding.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational used for scores, welfare and all rule-internal quantities.
pub type Rat = BigRational;

/// Money in minor currency units (cents).
pub type Money = u64;

/// Minor units per major currency unit.
pub const MINOR_PER_MAJOR: Money = 100;

pub fn rat_int(v: impl Into<BigInt>) -> Rat {
    Rat::from_integer(v.into())
}

pub fn rat(numer: i64, denom: i64) -> Rat {
    Rat::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("instance has no projects")]
    NoProjects,
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("project {0} has non-positive cost")]
    ZeroCost(String),
    #[error("duplicate project id {0}")]
    DuplicateProject(String),
    #[error("profile has no ballots")]
    EmptyProfile,
    #[error("ballot {ballot} references project index {index} but m = {m}")]
    IndexOutOfRange { ballot: usize, index: usize, m: usize },
    #[error("cardinal ballot {ballot} has {len} scores, expected {m}")]
    BallotLength { ballot: usize, len: usize, m: usize },
    #[error("cardinal ballot {0} has a negative score")]
    NegativeScore(usize),
    #[error("selection references project index {index} but m = {m}")]
    InvalidSelection { index: usize, m: usize },
    #[error("allocation costs {cost} which exceeds the budget {budget}")]
    Infeasible { cost: Money, budget: Money },
    #[error("objective {objective:?} does not apply to a {kind:?} profile")]
    ObjectiveMismatch { objective: Objective, kind: BallotKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub index: usize,
    pub cost: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    projects: Vec<Project>,
    budget: Money,
}

impl Instance {
    /// Builds an instance from `(id, cost)` pairs in dataset order.
    pub fn new<S: Into<String>>(
        projects: impl IntoIterator<Item = (S, Money)>,
        budget: Money,
    ) -> Result<Self, ModelError> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (index, (id, cost)) in projects.into_iter().enumerate() {
            let id = id.into();
            if cost == 0 {
                return Err(ModelError::ZeroCost(id));
            }
            if !seen.insert(id.clone()) {
                return Err(ModelError::DuplicateProject(id));
            }
            out.push(Project { id, index, cost });
        }
        if out.is_empty() {
            return Err(ModelError::NoProjects);
        }
        if budget == 0 {
            return Err(ModelError::ZeroBudget);
        }
        Ok(Self { projects: out, budget })
    }

    /// Instance with generated ids `p0..p{m-1}`; mostly for tests.
    pub fn from_costs(costs: &[Money], budget: Money) -> Result<Self, ModelError> {
        Self::new(
            costs.iter().enumerate().map(|(i, &c)| (format!("p{i}"), c)),
            budget,
        )
    }

    pub fn projects(&self) -> &[Project] {
        &self.projects
    }

    pub fn budget(&self) -> Money {
        self.budget
    }

    pub fn num_projects(&self) -> usize {
        self.projects.len()
    }

    pub fn cost(&self, p: usize) -> Money {
        self.projects[p].cost
    }

    pub fn costs(&self) -> Vec<Money> {
        self.projects.iter().map(|p| p.cost).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.projects.iter().position(|p| p.id == id)
    }

    pub fn total_project_cost(&self) -> Money {
        self.projects.iter().map(|p| p.cost).sum()
    }

    /// Every project fits in the budget at once.
    pub fn is_fully_funded(&self) -> bool {
        self.total_project_cost() <= self.budget
    }

    /// Exact cost of a selection.
    pub fn total_cost(&self, selection: &[usize]) -> Result<Money, ModelError> {
        let m = self.num_projects();
        selection.iter().try_fold(0, |acc, &p| {
            if p >= m {
                Err(ModelError::InvalidSelection { index: p, m })
            } else {
                Ok(acc + self.projects[p].cost)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BallotKind {
    Approval,
    Cardinal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ballots {
    /// Sorted, deduplicated approved project indices per voter.
    Approval(Vec<Vec<usize>>),
    /// Dense score vector of length m per voter.
    Cardinal(Vec<Vec<Rat>>),
}

/// n x m 0/1 matrix with both row and column bitsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n: usize,
    m: usize,
    rows: Vec<Vec<u64>>,
    cols: Vec<Vec<u64>>,
}

impl BinaryMatrix {
    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let row_words = m.div_ceil(64).max(1);
        let col_words = n.div_ceil(64).max(1);
        let mut rows = vec![vec![0u64; row_words]; n];
        let mut cols = vec![vec![0u64; col_words]; m];
        for (i, row) in rows.iter_mut().enumerate() {
            for (p, col) in cols.iter_mut().enumerate() {
                if f(i, p) {
                    row[p / 64] |= 1 << (p % 64);
                    col[i / 64] |= 1 << (i % 64);
                }
            }
        }
        Self { n, m, rows, cols }
    }

    pub fn num_rows(&self) -> usize {
        self.n
    }

    pub fn num_cols(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, p: usize) -> bool {
        self.rows[i][p / 64] >> (p % 64) & 1 == 1
    }

    pub fn row(&self, i: usize) -> Vec<bool> {
        (0..self.m).map(|p| self.get(i, p)).collect()
    }

    /// Agent bitset of column `p`.
    pub fn column(&self, p: usize) -> &[u64] {
        &self.cols[p]
    }

    pub fn column_count(&self, p: usize) -> usize {
        self.cols[p].iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Profile {
    num_projects: usize,
    ballots: Ballots,
    #[serde(skip)]
    binary: OnceLock<BinaryMatrix>,
}

impl Clone for Profile {
    fn clone(&self) -> Self {
        Self {
            num_projects: self.num_projects,
            ballots: self.ballots.clone(),
            binary: OnceLock::new(),
        }
    }
}

impl PartialEq for Profile {
    fn eq(&self, other: &Self) -> bool {
        self.num_projects == other.num_projects && self.ballots == other.ballots
    }
}

impl Eq for Profile {}

impl Profile {
    pub fn approval(num_projects: usize, ballots: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        if ballots.is_empty() {
            return Err(ModelError::EmptyProfile);
        }
        let mut normalized = Vec::with_capacity(ballots.len());
        for (b, mut ballot) in ballots.into_iter().enumerate() {
            if let Some(&index) = ballot.iter().find(|&&p| p >= num_projects) {
                return Err(ModelError::IndexOutOfRange { ballot: b, index, m: num_projects });
            }
            ballot.sort_unstable();
            ballot.dedup();
            normalized.push(ballot);
        }
        Ok(Self {
            num_projects,
            ballots: Ballots::Approval(normalized),
            binary: OnceLock::new(),
        })
    }

    pub fn cardinal(num_projects: usize, ballots: Vec<Vec<Rat>>) -> Result<Self, ModelError> {
        if ballots.is_empty() {
            return Err(ModelError::EmptyProfile);
        }
        for (b, ballot) in ballots.iter().enumerate() {
            if ballot.len() != num_projects {
                return Err(ModelError::BallotLength { ballot: b, len: ballot.len(), m: num_projects });
            }
            if ballot.iter().any(|s| s.is_negative()) {
                return Err(ModelError::NegativeScore(b));
            }
        }
        Ok(Self {
            num_projects,
            ballots: Ballots::Cardinal(ballots),
            binary: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> BallotKind {
        match self.ballots {
            Ballots::Approval(_) => BallotKind::Approval,
            Ballots::Cardinal(_) => BallotKind::Cardinal,
        }
    }

    pub fn ballots(&self) -> &Ballots {
        &self.ballots
    }

    pub fn num_voters(&self) -> usize {
        match &self.ballots {
            Ballots::Approval(b) => b.len(),
            Ballots::Cardinal(b) => b.len(),
        }
    }

    pub fn num_projects(&self) -> usize {
        self.num_projects
    }

    /// Approved projects of voter `i`; `None` on cardinal profiles.
    pub fn approved(&self, i: usize) -> Option<&[usize]> {
        match &self.ballots {
            Ballots::Approval(b) => Some(&b[i]),
            Ballots::Cardinal(_) => None,
        }
    }

    /// A_i(p): 0/1 for approval ballots, the score for cardinal ones.
    pub fn score(&self, i: usize, p: usize) -> Rat {
        match &self.ballots {
            Ballots::Approval(b) => {
                if b[i].binary_search(&p).is_ok() {
                    rat_int(1)
                } else {
                    Rat::zero()
                }
            }
            Ballots::Cardinal(b) => b[i][p].clone(),
        }
    }

    /// A_i(p) > 0.
    pub fn supports(&self, i: usize, p: usize) -> bool {
        match &self.ballots {
            Ballots::Approval(b) => b[i].binary_search(&p).is_ok(),
            Ballots::Cardinal(b) => b[i][p].is_positive(),
        }
    }

    /// 0/1 view used for mining, built on first use.
    pub fn binary(&self) -> &BinaryMatrix {
        self.binary.get_or_init(|| {
            BinaryMatrix::from_fn(self.num_voters(), self.num_projects, |i, p| self.supports(i, p))
        })
    }

    /// app(p, A): number of voters approving or positively scoring each project.
    pub fn approval_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_projects];
        match &self.ballots {
            Ballots::Approval(b) => {
                for ballot in b {
                    for &p in ballot {
                        counts[p] += 1;
                    }
                }
            }
            Ballots::Cardinal(b) => {
                for ballot in b {
                    for (p, s) in ballot.iter().enumerate() {
                        if s.is_positive() {
                            counts[p] += 1;
                        }
                    }
                }
            }
        }
        counts
    }

    /// Column sums of A (equals approval counts for approval ballots).
    pub fn score_sums(&self) -> Vec<Rat> {
        match &self.ballots {
            Ballots::Approval(_) => self.approval_counts().into_iter().map(rat_int).collect(),
            Ballots::Cardinal(b) => {
                let mut sums = vec![Rat::zero(); self.num_projects];
                for ballot in b {
                    for (acc, s) in sums.iter_mut().zip(ballot) {
                        *acc += s;
                    }
                }
                sums
            }
        }
    }

    /// Projects nobody approves or scores positively.
    pub fn unsupported_projects(&self) -> Vec<usize> {
        self.approval_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(p, _)| p)
            .collect()
    }

    /// Copy restricted to the given projects, re-indexed in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Profile {
        let mut position = vec![None; self.num_projects];
        for (new, &old) in keep.iter().enumerate() {
            position[old] = Some(new);
        }
        let ballots = match &self.ballots {
            Ballots::Approval(b) => Ballots::Approval(
                b.iter()
                    .map(|ballot| {
                        let mut v: Vec<usize> = ballot.iter().filter_map(|&p| position[p]).collect();
                        v.sort_unstable();
                        v
                    })
                    .collect(),
            ),
            Ballots::Cardinal(b) => Ballots::Cardinal(
                b.iter()
                    .map(|ballot| keep.iter().map(|&p| ballot[p].clone()).collect())
                    .collect(),
            ),
        };
        Profile { num_projects: keep.len(), ballots, binary: OnceLock::new() }
    }
}

/// A budget allocation: sorted project indices plus their total cost.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    selected: Vec<usize>,
    total_cost: Money,
}

impl Allocation {
    pub fn empty() -> Self {
        Self { selected: Vec::new(), total_cost: 0 }
    }

    /// Validates indices and feasibility against `instance`.
    pub fn new(instance: &Instance, selection: impl IntoIterator<Item = usize>) -> Result<Self, ModelError> {
        let mut selected: Vec<usize> = selection.into_iter().collect();
        selected.sort_unstable();
        selected.dedup();
        let total_cost = instance.total_cost(&selected)?;
        if total_cost > instance.budget() {
            return Err(ModelError::Infeasible { cost: total_cost, budget: instance.budget() });
        }
        Ok(Self { selected, total_cost })
    }

    /// Like [`Allocation::new`] but without the budget check. Used for
    /// intermediate outcomes (e.g. MES with raised endowments) that may
    /// overshoot.
    pub fn unchecked(instance: &Instance, selection: impl IntoIterator<Item = usize>) -> Result<Self, ModelError> {
        let mut selected: Vec<usize> = selection.into_iter().collect();
        selected.sort_unstable();
        selected.dedup();
        let total_cost = instance.total_cost(&selected)?;
        Ok(Self { selected, total_cost })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn total_cost(&self) -> Money {
        self.total_cost
    }

    pub fn contains(&self, p: usize) -> bool {
        self.selected.binary_search(&p).is_ok()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn is_feasible(&self, instance: &Instance) -> bool {
        self.total_cost <= instance.budget()
    }

    /// No unselected project fits into the leftover budget.
    pub fn is_exhaustive(&self, instance: &Instance) -> bool {
        if self.total_cost > instance.budget() {
            return false;
        }
        let left = instance.budget() - self.total_cost;
        instance
            .projects()
            .iter()
            .all(|p| self.contains(p.index) || p.cost > left)
    }

    pub fn membership(&self, m: usize) -> Vec<bool> {
        let mut v = vec![false; m];
        for &p in &self.selected {
            v[p] = true;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sat {
    /// sat(P) = |P|
    Card,
    /// sat(P) = c(P)
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    ApprovalSat(Sat),
    CardinalUtility,
}

impl Objective {
    pub fn kind(self) -> BallotKind {
        match self {
            Objective::ApprovalSat(_) => BallotKind::Approval,
            Objective::CardinalUtility => BallotKind::Cardinal,
        }
    }

    pub fn check(self, profile: &Profile) -> Result<(), ModelError> {
        if self.kind() == profile.kind() {
            Ok(())
        } else {
            Err(ModelError::ObjectiveMismatch { objective: self, kind: profile.kind() })
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::ApprovalSat(Sat::Cost) => "cost",
            Objective::ApprovalSat(Sat::Card) => "card",
            Objective::CardinalUtility => "cardinal",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cost" | "sat-cost" => Ok(Objective::ApprovalSat(Sat::Cost)),
            "card" | "sat-card" => Ok(Objective::ApprovalSat(Sat::Card)),
            "cardinal" | "utility" => Ok(Objective::CardinalUtility),
            other => Err(format!("unknown objective `{other}` (expected cost, card or cardinal)")),
        }
    }
}

/// sat applied to a set of projects.
pub fn sat_value(sat: Sat, projects: impl IntoIterator<Item = usize>, instance: &Instance) -> Money {
    match sat {
        Sat::Card => projects.into_iter().count() as Money,
        Sat::Cost => projects.into_iter().map(|p| instance.cost(p)).sum(),
    }
}

/// sat_i(selection) for an approval ballot.
pub fn satisfaction(
    objective: Objective,
    ballot: &[usize],
    selection: &Allocation,
    instance: &Instance,
) -> Result<Money, ModelError> {
    let Objective::ApprovalSat(sat) = objective else {
        return Err(ModelError::ObjectiveMismatch { objective, kind: BallotKind::Approval });
    };
    Ok(sat_value(sat, ballot.iter().copied().filter(|&p| selection.contains(p)), instance))
}

/// Per-project contribution to utilitarian welfare: app(p), c(p)·app(p), or
/// Σ_i A_i(p). Welfare is additive, so ω(π) = Σ_{p∈π} value(p).
pub fn project_values(instance: &Instance, profile: &Profile, objective: Objective) -> Result<Vec<Rat>, ModelError> {
    objective.check(profile)?;
    Ok(match objective {
        Objective::ApprovalSat(Sat::Card) => profile.approval_counts().into_iter().map(rat_int).collect(),
        Objective::ApprovalSat(Sat::Cost) => profile
            .approval_counts()
            .into_iter()
            .enumerate()
            .map(|(p, a)| rat_int(instance.cost(p)) * rat_int(a))
            .collect(),
        Objective::CardinalUtility => profile.score_sums(),
    })
}

/// Utilitarian social welfare of an allocation, computed voter by voter.
pub fn utilitarian_welfare(
    instance: &Instance,
    profile: &Profile,
    allocation: &Allocation,
    objective: Objective,
) -> Result<Rat, ModelError> {
    objective.check(profile)?;
    Ok(match (objective, profile.ballots()) {
        (Objective::ApprovalSat(sat), Ballots::Approval(b)) => {
            let total: u128 = b
                .iter()
                .map(|ballot| {
                    sat_value(sat, ballot.iter().copied().filter(|&p| allocation.contains(p)), instance) as u128
                })
                .sum();
            rat_int(total)
        }
        (Objective::CardinalUtility, Ballots::Cardinal(b)) => {
            let mut total = Rat::zero();
            for ballot in b {
                for &p in allocation.selected() {
                    total += &ballot[p];
                }
            }
            total
        }
        _ => unreachable!("objective checked against profile kind"),
    })
}
