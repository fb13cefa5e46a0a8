//! Synthetic instances from a two-dimensional Euclidean model: voters and
//! projects uniform on the unit square, each voter approving its k nearest
//! projects.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rejection, DataError, DatasetEntry, Rejection};
use crate::model::{BallotKind, Instance, Money, Profile, Rat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub voters: (usize, usize),
    pub projects: (usize, usize),
    /// minor units
    pub cost: (Money, Money),
    /// budget as a fraction of the total project cost
    pub budget_fraction: (f64, f64),
    /// approvals per voter
    pub nearest: (usize, usize),
    pub kind: BallotKind,
    pub seed: u64,
}

impl SynthConfig {
    /// Training ranges: n in [100, 1000], m in [10, 25].
    pub fn train(seed: u64) -> Self {
        Self {
            voters: (100, 1000),
            projects: (10, 25),
            cost: (1_000_00, 100_000_00),
            budget_fraction: (0.2, 0.5),
            nearest: (3, 8),
            kind: BallotKind::Approval,
            seed,
        }
    }

    /// Test ranges: n in [100, 2000], m in [10, 25].
    pub fn test(seed: u64) -> Self {
        Self { voters: (100, 2000), ..Self::train(seed) }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: &str| Err(DataError::Config(msg.to_string()));
        let ordered = |(a, b): (usize, usize)| a <= b;
        if !ordered(self.voters) || self.voters.0 == 0 {
            return bad("voter range must be non-empty and positive");
        }
        if !ordered(self.projects) || self.projects.0 == 0 {
            return bad("project range must be non-empty and positive");
        }
        if self.cost.0 > self.cost.1 || self.cost.0 == 0 {
            return bad("cost range must be non-empty and positive");
        }
        let (f0, f1) = self.budget_fraction;
        if !(f0.is_finite() && f1.is_finite() && 0.0 < f0 && f0 <= f1) {
            return bad("budget fraction range must be non-empty and positive");
        }
        if !ordered(self.nearest) || self.nearest.0 == 0 {
            return bad("approval count range must be non-empty and positive");
        }
        if self.nearest.1 > self.projects.0 {
            return bad("voters cannot approve more projects than the smallest instance has");
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 1000;

/// Points a cumulative voter spreads, as on a typical points ballot.
const POINTS: u64 = 10;

/// Spreads max(POINTS, k) points over the k nearest projects: one each,
/// the rest by largest remainder of inverse distance (ties to the nearer
/// project). Small point totals keep the score denominators small.
fn cumulative_points(nearest: &[(f64, usize)]) -> Vec<(usize, u64)> {
    let k = nearest.len() as u64;
    let spare = POINTS.max(k) - k;
    let inverse: Vec<f64> = nearest.iter().map(|&(d, _)| 1.0 / d.max(1e-9)).collect();
    let sum: f64 = inverse.iter().sum();
    let quotas: Vec<f64> = inverse.iter().map(|w| w / sum * spare as f64).collect();
    let mut points: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let mut order: Vec<usize> = (0..nearest.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let left = spare - points.iter().sum::<u64>();
    for &j in order.iter().take(left as usize) {
        points[j] += 1;
    }
    nearest.iter().zip(points).map(|(&(_, p), extra)| (p, 1 + extra)).collect()
}

fn draw(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<DatasetEntry, DataError> {
    let n = rng.random_range(cfg.voters.0..=cfg.voters.1);
    let m = rng.random_range(cfg.projects.0..=cfg.projects.1);
    let point = |rng: &mut ChaCha8Rng| (rng.random::<f64>(), rng.random::<f64>());
    let projects: Vec<(f64, f64)> = (0..m).map(|_| point(rng)).collect();
    let costs: Vec<Money> = (0..m).map(|_| rng.random_range(cfg.cost.0..=cfg.cost.1)).collect();
    let fraction = rng.random_range(cfg.budget_fraction.0..=cfg.budget_fraction.1);
    let total: Money = costs.iter().sum();
    let budget = ((total as f64 * fraction).floor() as Money).max(1);

    let mut approvals = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = point(rng);
        let k = rng.random_range(cfg.nearest.0..=cfg.nearest.1).min(m);
        let mut by_dist: Vec<(f64, usize)> = projects
            .iter()
            .enumerate()
            .map(|(p, &(px, py))| (((px - x).powi(2) + (py - y).powi(2)).sqrt(), p))
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        by_dist.truncate(k);
        weights.push(cumulative_points(&by_dist));
        approvals.push(by_dist.into_iter().map(|(_, p)| p).collect::<Vec<_>>());
    }

    let instance = Instance::new(costs.iter().enumerate().map(|(p, &c)| (format!("{}", p + 1), c)), budget)?;
    let profile = match cfg.kind {
        BallotKind::Approval => Profile::approval(m, approvals)?,
        BallotKind::Cardinal => {
            let ballots = weights
                .into_iter()
                .map(|ws: Vec<(usize, u64)>| {
                    let total: u64 = ws.iter().map(|w| w.1).sum();
                    let mut scores = vec![Rat::from_integer(BigInt::from(0)); m];
                    for (p, w) in ws {
                        scores[p] = Rat::new(BigInt::from(w), BigInt::from(total));
                    }
                    scores
                })
                .collect();
            Profile::cardinal(m, ballots)?
        }
    };
    let meta = BTreeMap::from([
        ("description".to_string(), "synthetic euclidean instance".to_string()),
        ("country".to_string(), "synthetic".to_string()),
        ("instance".to_string(), format!("synthetic-{}", cfg.seed)),
    ]);
    Ok(DatasetEntry::new(instance, profile, meta))
}

/// Deterministic in `config.seed`. Draws that leave a project without
/// support or admit no cohesive group are redrawn from the same stream, so
/// the result passes the corpus filters unless the budget fraction makes
/// the instance fully funded.
pub fn generate_synthetic(config: &SynthConfig) -> Result<DatasetEntry, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut entry = draw(config, &mut rng)?;
    for _ in 1..MAX_ATTEMPTS {
        match rejection(&entry) {
            Some(Rejection::UnsupportedProject | Rejection::NoCohesiveGroup) => entry = draw(config, &mut rng)?,
            _ => break,
        }
    }
    Ok(entry)
}
