//! Maximal cohesive groups.
//!
//! A project set P is backed by its maximal group N^max, the voters who
//! approve (or positively score) every project in P. P is cohesive when
//! |N^max|/n · b ≥ c(P). Candidates are found with level-wise Apriori at
//! minimum support min_p c(p)/b, which every cohesive P must reach.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{rat_int, BinaryMatrix, Instance, Profile, Rat};

/// Default cap on groups considered by the approximation metric.
pub const DEFAULT_SIGMA: usize = 100;

/// Largest m accepted by [`brute_force_cohesive_groups`].
pub const BRUTE_FORCE_MAX_PROJECTS: usize = 20;

#[derive(Debug, Error)]
pub enum CohesionError {
    #[error("brute-force enumeration refused: m = {m} exceeds {max}")]
    TooManyProjects { m: usize, max: usize },
    #[error("group cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohesiveGroup {
    /// Sorted project indices.
    pub projects: Vec<usize>,
    /// Sorted voter indices of the maximal group.
    pub members: Vec<usize>,
    pub support: Rat,
    pub gamma: Rat,
    /// Π_{p∈P} app(p, A).
    pub tiebreak: BigUint,
    /// min_{i∈N^max} A_i(p) for each p in `projects` (all ones for approval).
    pub alpha_floor: Vec<Rat>,
}

impl CohesiveGroup {
    /// Ordering of the index: γ desc, tiebreak desc, then P ascending.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .gamma
            .cmp(&self.gamma)
            .then_with(|| other.tiebreak.cmp(&self.tiebreak))
            .then_with(|| self.projects.cmp(&other.projects))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupIndex {
    groups: Vec<CohesiveGroup>,
    truncated_at: Option<usize>,
}

impl GroupIndex {
    /// Sorts `groups` into index order.
    pub fn from_groups(mut groups: Vec<CohesiveGroup>) -> Self {
        groups.sort_by(CohesiveGroup::rank_cmp);
        Self { groups, truncated_at: None }
    }

    pub fn groups(&self) -> &[CohesiveGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn truncated_at(&self) -> Option<usize> {
        self.truncated_at
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_at.is_some()
    }

    /// Keeps the first σ groups. A no-op (and no truncation mark) when s ≤ σ.
    pub fn truncate(mut self, sigma: usize) -> Self {
        if self.groups.len() > sigma {
            self.groups.truncate(sigma);
            self.truncated_at = Some(sigma);
        }
        self
    }
}

/// binarize(profile): entry (i, p) is 1 iff A_i(p) > 0.
pub fn binarize(profile: &Profile) -> &BinaryMatrix {
    profile.binary()
}

/// min_p c(p) / b, clamped to at most 1.
pub fn min_support(instance: &Instance) -> Rat {
    let cheapest = instance.projects().iter().map(|p| p.cost).min().expect("m >= 1");
    let s = Rat::new(cheapest.into(), instance.budget().into());
    s.min(Rat::one())
}

fn and_into(acc: &mut [u64], col: &[u64]) {
    for (a, c) in acc.iter_mut().zip(col) {
        *a &= c;
    }
}

fn popcount(bits: &[u64]) -> usize {
    bits.iter().map(|w| w.count_ones() as usize).sum()
}

fn itemset_bits(matrix: &BinaryMatrix, items: &[usize]) -> Vec<u64> {
    let mut acc = matrix.column(items[0]).to_vec();
    for &p in &items[1..] {
        and_into(&mut acc, matrix.column(p));
    }
    acc
}

/// All itemsets whose support is at least `minsupp`, with their support.
///
/// Level-wise Apriori: size-k candidates are joins of frequent (k-1)-itemsets
/// sharing a (k-2)-prefix, pruned unless every (k-1)-subset is frequent.
/// Output is ordered by size, then lexicographically.
pub fn frequent_itemsets(matrix: &BinaryMatrix, minsupp: &Rat) -> Vec<(Vec<usize>, Rat)> {
    let n = matrix.num_rows();
    if n == 0 {
        return Vec::new();
    }
    let n_int = rat_int(n);
    // support >= minsupp  <=>  count >= minsupp * n
    let threshold = minsupp * &n_int;
    let frequent = |count: usize| rat_int(count) >= threshold;

    let mut out = Vec::new();
    let mut level: Vec<Vec<usize>> = (0..matrix.num_cols())
        .filter(|&p| frequent(matrix.column_count(p)))
        .map(|p| vec![p])
        .collect();
    for items in &level {
        out.push((items.clone(), Rat::new(matrix.column_count(items[0]).into(), n.into())));
    }

    while level.len() > 1 {
        let known: HashSet<&[usize]> = level.iter().map(|v| v.as_slice()).collect();
        let mut candidates = Vec::new();
        for (a, left) in level.iter().enumerate() {
            let k = left.len();
            for right in &level[a + 1..] {
                if left[..k - 1] != right[..k - 1] {
                    break;
                }
                let mut cand = left.clone();
                cand.push(right[k - 1]);
                let all_subsets_frequent = (0..cand.len() - 2).all(|drop| {
                    let sub: Vec<usize> = cand
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != drop)
                        .map(|(_, &p)| p)
                        .collect();
                    known.contains(sub.as_slice())
                });
                if all_subsets_frequent {
                    candidates.push(cand);
                }
            }
        }
        let counted: Vec<(Vec<usize>, usize)> = candidates
            .into_par_iter()
            .map(|cand| {
                let c = popcount(&itemset_bits(matrix, &cand));
                (cand, c)
            })
            .collect();
        level = Vec::new();
        for (cand, count) in counted {
            if frequent(count) {
                out.push((cand.clone(), Rat::new(count.into(), n.into())));
                level.push(cand);
            }
        }
    }
    out
}

/// All voters whose row is 1 on every project of `projects`.
pub fn maximal_group(projects: &[usize], matrix: &BinaryMatrix) -> Vec<usize> {
    assert!(!projects.is_empty(), "maximal_group needs a non-empty project set");
    let bits = itemset_bits(matrix, projects);
    let mut members = Vec::new();
    for (w, &word) in bits.iter().enumerate() {
        let mut word = word;
        while word != 0 {
            let b = word.trailing_zeros() as usize;
            let i = w * 64 + b;
            if i < matrix.num_rows() {
                members.push(i);
            }
            word &= word - 1;
        }
    }
    members
}

fn build_group(
    projects: Vec<usize>,
    members: Vec<usize>,
    instance: &Instance,
    profile: &Profile,
    app: &[usize],
) -> CohesiveGroup {
    let n = profile.num_voters();
    let cost: u64 = projects.iter().map(|&p| instance.cost(p)).sum();
    let support = Rat::new(members.len().into(), n.into());
    let gamma = &support * Rat::new(instance.budget().into(), cost.into());
    let tiebreak = projects
        .iter()
        .fold(BigUint::one(), |acc, &p| acc * BigUint::from(app[p]));
    let alpha_floor = projects
        .iter()
        .map(|&p| {
            members
                .iter()
                .map(|&i| profile.score(i, p))
                .min()
                .unwrap_or_else(Rat::zero)
        })
        .collect();
    CohesiveGroup { projects, members, support, gamma, tiebreak, alpha_floor }
}

/// Every maximal cohesive group, sorted into index order.
///
/// An empty index means the instance has no cohesive group at all.
pub fn mine_cohesive_groups(instance: &Instance, profile: &Profile) -> GroupIndex {
    let matrix = binarize(profile);
    let minsupp = min_support(instance);
    let app = profile.approval_counts();
    let budget = rat_int(instance.budget());
    let groups: Vec<CohesiveGroup> = frequent_itemsets(matrix, &minsupp)
        .into_par_iter()
        .filter(|(projects, supp)| {
            let cost: u64 = projects.iter().map(|&p| instance.cost(p)).sum();
            supp * &budget >= rat_int(cost)
        })
        .map(|(projects, _)| {
            let members = maximal_group(&projects, matrix);
            build_group(projects, members, instance, profile, &app)
        })
        .collect();
    GroupIndex::from_groups(groups)
}

/// Oracle for [`mine_cohesive_groups`]: tries every non-empty P directly
/// against the ballots, without the binary matrix or Apriori.
pub fn brute_force_cohesive_groups(instance: &Instance, profile: &Profile) -> Result<GroupIndex, CohesionError> {
    let m = instance.num_projects();
    if m > BRUTE_FORCE_MAX_PROJECTS {
        return Err(CohesionError::TooManyProjects { m, max: BRUTE_FORCE_MAX_PROJECTS });
    }
    let n = profile.num_voters();
    let app = profile.approval_counts();
    let mut groups = Vec::new();
    for mask in 1u32..(1 << m) {
        let projects: Vec<usize> = (0..m).filter(|p| mask >> p & 1 == 1).collect();
        let members: Vec<usize> = (0..n)
            .filter(|&i| projects.iter().all(|&p| profile.supports(i, p)))
            .collect();
        if members.is_empty() {
            continue;
        }
        let cost: u64 = projects.iter().map(|&p| instance.cost(p)).sum();
        // |N|/n · b ≥ c(P)
        if (members.len() as u128) * (instance.budget() as u128) >= (n as u128) * (cost as u128) {
            groups.push(build_group(projects, members, instance, profile, &app));
        }
    }
    Ok(GroupIndex::from_groups(groups))
}

/// Checks both cohesiveness conditions and maximality of one group.
pub fn is_valid_maximal_group(group: &CohesiveGroup, instance: &Instance, profile: &Profile) -> bool {
    let n = profile.num_voters();
    let members: BTreeSet<usize> = group.members.iter().copied().collect();
    let cost: u64 = group.projects.iter().map(|&p| instance.cost(p)).sum();
    let affordable = (members.len() as u128) * (instance.budget() as u128) >= (n as u128) * (cost as u128);
    let all_support = members
        .iter()
        .all(|&i| group.projects.iter().all(|&p| profile.supports(i, p)));
    let maximal = (0..n)
        .filter(|i| !members.contains(i))
        .all(|i| !group.projects.iter().all(|&p| profile.supports(i, p)));
    !members.is_empty() && affordable && all_support && maximal && group.gamma >= Rat::one()
}

const CACHE_HEADER: [&str; 6] = ["projects", "support", "gamma", "tiebreak", "member_count", "alpha_floor"];

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes the index as CSV, one row per group. Members are not stored; they
/// are recomputed from P on load.
pub fn write_group_csv<W: Write>(index: &GroupIndex, writer: W) -> Result<(), CohesionError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| CohesionError::Cache(e.to_string());
    w.write_record(CACHE_HEADER).map_err(err)?;
    for g in index.groups() {
        w.write_record([
            join(&g.projects),
            g.support.to_string(),
            g.gamma.to_string(),
            g.tiebreak.to_string(),
            g.members.len().to_string(),
            join(&g.alpha_floor),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CohesionError::Cache(e.to_string()))
}

/// Reads an index written by [`write_group_csv`], rebuilding each group's
/// members against `profile` and checking them against the stored row.
pub fn read_group_csv<R: Read>(reader: R, instance: &Instance, profile: &Profile) -> Result<GroupIndex, CohesionError> {
    let mut r = csv::Reader::from_reader(reader);
    let app = profile.approval_counts();
    let matrix = binarize(profile);
    let mut groups = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CohesionError::Cache(e.to_string()))?;
        let bad = |what: &str| CohesionError::Cache(format!("row {}: bad {what}", row + 1));
        let projects: Vec<usize> = rec
            .get(0)
            .ok_or_else(|| bad("projects"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("projects")))
            .collect::<Result<_, _>>()?;
        if projects.is_empty() || projects.iter().any(|&p| p >= instance.num_projects()) {
            return Err(bad("projects"));
        }
        let count: usize = rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(|| bad("member_count"))?;
        let gamma: Rat = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("gamma"))?;
        let members = maximal_group(&projects, matrix);
        let group = build_group(projects, members, instance, profile, &app);
        if group.members.len() != count || group.gamma != gamma {
            return Err(CohesionError::Cache(format!(
                "row {}: cached group does not match the profile",
                row + 1
            )));
        }
        groups.push(group);
    }
    Ok(GroupIndex::from_groups(groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rat;

    fn matrix(rows: &[&[u8]]) -> BinaryMatrix {
        BinaryMatrix::from_fn(rows.len(), rows[0].len(), |i, p| rows[i][p] == 1)
    }

    #[test]
    fn min_support_examples() {
        let i = Instance::from_costs(&[20, 50, 80], 100).unwrap();
        assert_eq!(min_support(&i), rat(1, 5));
        assert_eq!(min_support(&Instance::from_costs(&[100], 100).unwrap()), rat(1, 1));
        assert_eq!(min_support(&Instance::from_costs(&[150, 200], 100).unwrap()), rat(1, 1));
    }

    #[test]
    fn frequent_itemsets_threshold_equality() {
        let m = matrix(&[&[1, 0], &[1, 0], &[0, 1], &[0, 0]]);
        let sets = frequent_itemsets(&m, &rat(1, 2));
        assert!(sets.contains(&(vec![0], rat(1, 2))));
        assert!(!sets.iter().any(|(p, _)| p == &vec![1]));
    }

    #[test]
    fn frequent_itemsets_empty_at_full_support() {
        let m = matrix(&[&[1, 0], &[0, 1]]);
        assert!(frequent_itemsets(&m, &rat(1, 1)).is_empty());
    }

    #[test]
    fn frequent_itemsets_match_enumeration() {
        // Oracle: every non-empty itemset with its support, by exhaustive count.
        let m = matrix(&[&[1, 1], &[1, 1], &[1, 1]]);
        let mut expected = Vec::new();
        for mask in 1u32..4 {
            let items: Vec<usize> = (0..2).filter(|p| mask >> p & 1 == 1).collect();
            let count = (0..3).filter(|&i| items.iter().all(|&p| m.get(i, p))).count();
            expected.push((items, rat(count as i64, 3)));
        }
        let mut got = frequent_itemsets(&m, &rat(1, 3));
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
        assert!(got.iter().all(|(_, s)| *s == rat(1, 1)));
    }

    #[test]
    fn maximal_group_examples() {
        let m = matrix(&[&[1, 1, 0], &[0, 0, 1], &[1, 0, 0], &[1, 1, 0]]);
        assert_eq!(maximal_group(&[0], &m), vec![0, 2, 3]);
        assert_eq!(maximal_group(&[0, 2], &m), Vec::<usize>::new());
        let sup = maximal_group(&[0, 1], &m);
        assert!(sup.iter().all(|i| maximal_group(&[0], &m).contains(i)));
    }

    #[test]
    fn two_disjoint_groups_ordered_by_tiebreak_then_projects() {
        // p_a (cost 50) approved by {0,1}; p_b (cost 50) approved by {2,3}.
        let inst = Instance::from_costs(&[50, 50], 100).unwrap();
        let prof = Profile::approval(2, vec![vec![0], vec![0], vec![1], vec![1]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        assert_eq!(idx.len(), 2);
        assert!(idx.groups().iter().all(|g| g.gamma == rat(1, 1)));
        assert_eq!(idx.groups()[0].projects, vec![0]);
        assert_eq!(idx.groups()[1].projects, vec![1]);
        assert_eq!(idx.groups()[1].members, vec![2, 3]);
        assert_eq!(idx, brute_force_cohesive_groups(&inst, &prof).unwrap());
    }

    #[test]
    fn tiebreak_beats_lexicographic_order() {
        // {p1} has three approvers, {p0} two; equal gamma is arranged via costs.
        let inst = Instance::from_costs(&[40, 60], 120).unwrap();
        let prof = Profile::approval(2, vec![vec![0], vec![0, 1], vec![1], vec![1]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        // gamma(p0) = 2/4 * 120/40 = 3/2; gamma(p1) = 3/4 * 120/60 = 3/2
        assert_eq!(idx.groups()[0].gamma, idx.groups()[1].gamma);
        assert_eq!(idx.groups()[0].projects, vec![1]);
    }

    #[test]
    fn affordability_failure_gives_no_group() {
        let inst = Instance::from_costs(&[60], 100).unwrap();
        let prof = Profile::approval(1, vec![vec![0], vec![]]).unwrap();
        assert!(mine_cohesive_groups(&inst, &prof).is_empty());
        assert!(brute_force_cohesive_groups(&inst, &prof).unwrap().is_empty());
    }

    #[test]
    fn gamma_arithmetic() {
        let inst = Instance::from_costs(&[25], 100).unwrap();
        let prof = Profile::approval(1, vec![vec![0], vec![0], vec![], vec![]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        assert_eq!(idx.groups()[0].gamma, rat(2, 1));
    }

    #[test]
    fn full_agreement_yields_every_affordable_set() {
        let inst = Instance::from_costs(&[30, 40, 50], 100).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1, 2]; 3]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let mut sets: Vec<Vec<usize>> = idx.groups().iter().map(|g| g.projects.clone()).collect();
        sets.sort();
        assert_eq!(sets, vec![vec![0], vec![0, 1], vec![0, 2], vec![1], vec![1, 2], vec![2]]);
        assert!(idx.groups().iter().all(|g| g.members == vec![0, 1, 2]));
    }

    #[test]
    fn cardinal_alpha_floor() {
        let inst = Instance::from_costs(&[10, 10], 40).unwrap();
        let prof = Profile::cardinal(
            2,
            vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 4), rat(0, 1)], vec![rat(1, 3), rat(2, 3)]],
        )
        .unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let g0 = idx.groups().iter().find(|g| g.projects == vec![0]).unwrap();
        assert_eq!(g0.alpha_floor, vec![rat(1, 4)]);
        assert_eq!(g0.members, vec![0, 1, 2]);
        let g01 = idx.groups().iter().find(|g| g.projects == vec![0, 1]).unwrap();
        assert_eq!(g01.alpha_floor, vec![rat(1, 3), rat(1, 2)]);
        assert!(idx.groups().iter().all(|g| is_valid_maximal_group(g, &inst, &prof)));
    }

    #[test]
    fn brute_force_refuses_large_m() {
        let inst = Instance::from_costs(&[1; 21], 5).unwrap();
        let prof = Profile::approval(21, vec![vec![0]]).unwrap();
        assert!(matches!(
            brute_force_cohesive_groups(&inst, &prof),
            Err(CohesionError::TooManyProjects { m: 21, .. })
        ));
    }

    #[test]
    fn truncation_is_prefix() {
        let inst = Instance::from_costs(&[30, 40, 50], 100).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1, 2]; 3]).unwrap();
        let full = mine_cohesive_groups(&inst, &prof);
        let cut = full.clone().truncate(2);
        assert_eq!(cut.groups(), &full.groups()[..2]);
        assert_eq!(cut.truncated_at(), Some(2));
        assert!(!full.clone().truncate(100).is_truncated());
    }

    #[test]
    fn csv_cache_round_trip() {
        let inst = Instance::from_costs(&[30, 40, 50], 100).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1], vec![0, 1, 2], vec![2]]).unwrap();
        let idx = mine_cohesive_groups(&inst, &prof);
        let mut buf = Vec::new();
        write_group_csv(&idx, &mut buf).unwrap();
        let back = read_group_csv(buf.as_slice(), &inst, &prof).unwrap();
        assert_eq!(back, idx);
    }
}
