//! Datasets: the Pabulib flat format, corpus filters and splits, synthetic
//! instances and an on-disk cache.

mod cache;
mod pabulib;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{Cache, ManifestRow};
pub use pabulib::{format_money, parse_money, parse_pabulib, write_pabulib};
pub use synth::{generate_synthetic, SynthConfig};

use crate::model::{BallotKind, Instance, ModelError, Profile};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("missing {0} section")]
    MissingSection(&'static str),
    #[error("{0} section appears twice")]
    DuplicateSection(String),
    #[error("missing META key `{0}`")]
    MissingMeta(&'static str),
    #[error("invalid META value for `{key}`: `{value}`")]
    InvalidMeta { key: &'static str, value: String },
    #[error("unsupported vote_type `{0}`")]
    UnsupportedVoteType(String),
    #[error("{section} section lacks column `{column}`")]
    MissingColumn { section: &'static str, column: &'static str },
    #[error("project `{project}` has invalid cost `{value}` (non-negative, at most two decimals)")]
    InvalidCost { project: String, value: String },
    #[error("vote references unknown project `{0}`")]
    UnknownProject(String),
    #[error("declared {what} = {declared} but found {found}")]
    CountMismatch { what: &'static str, declared: usize, found: usize },
    #[error(transparent)]
    Model(ModelError),
    #[error("{0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    /// 1-based; 0 when the problem is not tied to a line
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("ballot {0} cannot be written as integer points")]
    Unrepresentable(usize),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache: {0}")]
    Cache(String),
}

/// A parsed instance with its profile and the file's META block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub instance: Instance,
    pub profile: Profile,
    pub metadata: BTreeMap<String, String>,
}

impl DatasetEntry {
    /// Builds an entry and sets the required META keys from the data.
    pub fn new(instance: Instance, profile: Profile, mut metadata: BTreeMap<String, String>) -> Self {
        metadata.insert("budget".into(), format_money(instance.budget()));
        metadata.insert("num_projects".into(), instance.num_projects().to_string());
        metadata.insert("num_votes".into(), profile.num_voters().to_string());
        let vote_type = match profile.kind() {
            BallotKind::Approval => "approval",
            BallotKind::Cardinal => "cumulative",
        };
        metadata.insert("vote_type".into(), vote_type.into());
        Self { instance, profile, metadata }
    }

    pub fn num_voters(&self) -> usize {
        self.profile.num_voters()
    }

    pub fn num_projects(&self) -> usize {
        self.instance.num_projects()
    }

    pub fn kind(&self) -> BallotKind {
        self.profile.kind()
    }

    pub fn country(&self) -> Option<&str> {
        self.metadata.get("country").map(String::as_str)
    }

    /// The META `experimental` flag; absent means false.
    pub fn is_experimental(&self) -> bool {
        self.metadata
            .get("experimental")
            .is_some_and(|v| matches!(v.trim().to_ascii_lowercase().as_str(), "true" | "1" | "yes"))
    }

    pub fn name(&self) -> String {
        self.metadata
            .get("instance")
            .or_else(|| self.metadata.get("description"))
            .cloned()
            .unwrap_or_else(|| "unnamed".into())
    }
}

/// Hex SHA-256 of raw file content; the cache key.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    TooFewProjects,
    TooManyProjects,
    FullyFunded,
    Experimental,
    UnsupportedProject,
    NoCohesiveGroup,
}

pub const MIN_PROJECTS: usize = 3;
pub const MAX_PROJECTS: usize = 25;

/// Why an entry is excluded from the corpus, if it is.
pub fn rejection(entry: &DatasetEntry) -> Option<Rejection> {
    let inst = &entry.instance;
    let m = inst.num_projects();
    if m < MIN_PROJECTS {
        return Some(Rejection::TooFewProjects);
    }
    if m > MAX_PROJECTS {
        return Some(Rejection::TooManyProjects);
    }
    if inst.is_fully_funded() {
        return Some(Rejection::FullyFunded);
    }
    if entry.is_experimental() {
        return Some(Rejection::Experimental);
    }
    if !entry.profile.unsupported_projects().is_empty() {
        return Some(Rejection::UnsupportedProject);
    }
    // Any cohesive (P, N) makes every {p} ⊆ P cohesive with the same N, so
    // singletons decide existence: app(p)·b ≥ n·c(p).
    let n = entry.profile.num_voters() as u128;
    let b = inst.budget() as u128;
    let counts = entry.profile.approval_counts();
    if !(0..m).any(|p| counts[p] as u128 * b >= n * inst.cost(p) as u128) {
        return Some(Rejection::NoCohesiveGroup);
    }
    None
}

pub fn filter_dataset(entries: Vec<DatasetEntry>) -> Vec<DatasetEntry> {
    entries.into_iter().filter(|e| rejection(e).is_none()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitRole {
    Train,
    TestId,
    TestOod,
    Unsplit,
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRole::Train => "train",
            SplitRole::TestId => "test-id",
            SplitRole::TestOod => "test-ood",
            SplitRole::Unsplit => "unsplit",
        })
    }
}

impl std::str::FromStr for SplitRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(SplitRole::Train),
            "test-id" | "id" => Ok(SplitRole::TestId),
            "test-ood" | "ood" => Ok(SplitRole::TestOod),
            "unsplit" => Ok(SplitRole::Unsplit),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    /// n below the threshold
    Small,
    Large,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountryFilter {
    Any,
    /// country matches one of these names (case-insensitive)
    In(Vec<String>),
    NotIn(Vec<String>),
}

impl CountryFilter {
    fn matches(&self, country: Option<&str>) -> bool {
        let norm = country.map(|c| c.trim().to_ascii_lowercase());
        let hit = |names: &[String]| norm.as_ref().is_some_and(|c| names.iter().any(|n| n.eq_ignore_ascii_case(c)));
        match self {
            CountryFilter::Any => true,
            CountryFilter::In(names) => hit(names),
            CountryFilter::NotIn(names) => !hit(names),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub kind: BallotKind,
    pub size: SizeClass,
    pub size_threshold: usize,
    pub country: CountryFilter,
    pub role: SplitRole,
}

pub const SMALL_THRESHOLD: usize = 1000;

fn us_names() -> Vec<String> {
    ["us", "usa", "united states", "united states of america"].map(String::from).to_vec()
}

/// Cardinal: small → train, large → OOD test. Approval: small and held in
/// the U.S. → train, other small → ID test, large → OOD test.
pub fn default_splits() -> Vec<SplitSpec> {
    let spec = |kind, size, country, role| SplitSpec { kind, size, size_threshold: SMALL_THRESHOLD, country, role };
    vec![
        spec(BallotKind::Cardinal, SizeClass::Small, CountryFilter::Any, SplitRole::Train),
        spec(BallotKind::Cardinal, SizeClass::Large, CountryFilter::Any, SplitRole::TestOod),
        spec(BallotKind::Approval, SizeClass::Small, CountryFilter::In(us_names()), SplitRole::Train),
        spec(BallotKind::Approval, SizeClass::Small, CountryFilter::NotIn(us_names()), SplitRole::TestId),
        spec(BallotKind::Approval, SizeClass::Large, CountryFilter::Any, SplitRole::TestOod),
    ]
}

/// Role of the first matching spec, or `Unsplit`.
pub fn assign_split(entry: &DatasetEntry, splits: &[SplitSpec]) -> SplitRole {
    let n = entry.num_voters();
    splits
        .iter()
        .find(|s| {
            let size = if n < s.size_threshold { SizeClass::Small } else { SizeClass::Large };
            s.kind == entry.kind() && s.size == size && s.country.matches(entry.country())
        })
        .map(|s| s.role)
        .unwrap_or(SplitRole::Unsplit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rat;

    fn approval_entry(n: usize, costs: &[u64], budget: u64, country: &str) -> DatasetEntry {
        let inst = Instance::from_costs(costs, budget).unwrap();
        let m = costs.len();
        let prof = Profile::approval(m, vec![(0..m).collect(); n]).unwrap();
        let meta = BTreeMap::from([("country".to_string(), country.to_string())]);
        DatasetEntry::new(inst, prof, meta)
    }

    #[test]
    fn filters() {
        assert_eq!(rejection(&approval_entry(5, &[10, 10], 15, "PL")), Some(Rejection::TooFewProjects));
        assert_eq!(rejection(&approval_entry(5, &[10, 10, 10], 30, "PL")), Some(Rejection::FullyFunded));
        let costs = [10; 10];
        assert_eq!(rejection(&approval_entry(5, &costs, 50, "PL")), None);
        let mut e = approval_entry(5, &costs, 50, "PL");
        e.metadata.insert("experimental".into(), "True".into());
        assert_eq!(rejection(&e), Some(Rejection::Experimental));
        assert_eq!(filter_dataset(vec![e, approval_entry(5, &costs, 50, "PL")]).len(), 1);
    }

    #[test]
    fn cohesive_group_and_support_required() {
        let inst = Instance::from_costs(&[10, 10, 10], 20).unwrap();
        let prof = Profile::approval(3, vec![vec![0, 1], vec![2]]).unwrap();
        assert_eq!(rejection(&DatasetEntry::new(inst.clone(), prof, BTreeMap::new())), None);
        let prof = Profile::approval(3, vec![vec![0, 1], vec![0]]).unwrap();
        assert_eq!(rejection(&DatasetEntry::new(inst, prof, BTreeMap::new())), Some(Rejection::UnsupportedProject));
        // every project needs ≥ 3/4 of the voters; each has 1 of 4
        let inst = Instance::from_costs(&[15, 15, 15], 20).unwrap();
        let prof = Profile::approval(3, vec![vec![0], vec![1], vec![2], vec![0]]).unwrap();
        assert_eq!(rejection(&DatasetEntry::new(inst, prof, BTreeMap::new())), Some(Rejection::NoCohesiveGroup));
    }

    #[test]
    fn table_splits() {
        let s = default_splits();
        assert_eq!(assign_split(&approval_entry(500, &[1, 1, 1], 2, "US"), &s), SplitRole::Train);
        assert_eq!(assign_split(&approval_entry(500, &[1, 1, 1], 2, "United States"), &s), SplitRole::Train);
        assert_eq!(assign_split(&approval_entry(500, &[1, 1, 1], 2, "PL"), &s), SplitRole::TestId);
        assert_eq!(assign_split(&approval_entry(1000, &[1, 1, 1], 2, "US"), &s), SplitRole::TestOod);
        let inst = Instance::from_costs(&[1, 1, 1], 2).unwrap();
        let prof = Profile::cardinal(3, vec![vec![rat(1, 3); 3]; 5000]).unwrap();
        let e = DatasetEntry::new(inst, prof, BTreeMap::new());
        assert_eq!(assign_split(&e, &s), SplitRole::TestOod);
        assert_eq!(assign_split(&e, &s[..1]), SplitRole::Unsplit);
    }
}
