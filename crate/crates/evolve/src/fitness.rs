use std::time::{Duration, Instant};

use fairpb_core::cohesion::{mine_cohesive_groups, GroupIndex};
use fairpb_core::dsl::{CandidateRule, EvalError, FeatureSet, Validity};
use fairpb_core::fairness::{normalized_welfare, strong_ejr_approx, FairnessError};
use fairpb_core::model::{utilitarian_welfare, Allocation, Instance, ModelError, Objective, Profile, Rat};
use fairpb_core::rules::{self, RuleError, RuleId};
use num_traits::Zero;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no baseline rule to derive epsilon from")]
    NoBaselines,
    #[error("instance {name}: {source}")]
    Rule { name: String, source: RuleError },
    #[error("instance {name}: {source}")]
    Fairness { name: String, source: FairnessError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// 1 when φ falls short of the threshold, else 0.
pub fn theta(phi: f64, epsilon: f64) -> u8 {
    u8::from(phi < epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceScore {
    pub omega_prime: f64,
    pub phi: f64,
}

/// q = mean over instances of ω′ − θ(φ, ε). NaN for an empty slice.
pub fn fitness_from_parts(scores: &[InstanceScore], epsilon: f64) -> f64 {
    let total: f64 = scores.iter().map(|s| s.omega_prime - f64::from(theta(s.phi, epsilon))).sum();
    total / scores.len() as f64
}

/// Largest of the baselines' mean φ.
pub fn epsilon_from_means(means: &[f64]) -> Result<f64, FitnessError> {
    means.iter().copied().reduce(f64::max).ok_or(FitnessError::NoBaselines)
}

/// Everything about one training instance that does not depend on the rule.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub name: String,
    pub instance: Instance,
    pub profile: Profile,
    pub features: FeatureSet,
    pub groups: GroupIndex,
    pub optimal_welfare: Rat,
}

/// Training set with groups and optimal welfare computed up front.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub objective: Objective,
    pub sigma: usize,
    pub instances: Vec<TrainingInstance>,
}

/// Why a candidate could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFailure {
    pub validity: Validity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub scores: Vec<InstanceScore>,
}

impl EvalContext {
    /// Mines groups where none are supplied and solves for the optimum on
    /// every instance, in parallel.
    pub fn build(
        items: Vec<(String, Instance, Profile, Option<GroupIndex>)>,
        objective: Objective,
        sigma: usize,
    ) -> Result<Self, FitnessError> {
        if items.is_empty() {
            return Err(FitnessError::EmptyTrainingSet);
        }
        let instances = items
            .into_par_iter()
            .map(|(name, instance, profile, groups)| {
                objective.check(&profile)?;
                let groups = groups.unwrap_or_else(|| mine_cohesive_groups(&instance, &profile));
                let best = rules::max_util(&instance, &profile, objective)
                    .map_err(|source| FitnessError::Rule { name: name.clone(), source })?;
                let optimal_welfare = utilitarian_welfare(&instance, &profile, &best, objective)?;
                let features = FeatureSet::new(&instance, &profile);
                Ok(TrainingInstance { name, instance, profile, features, groups, optimal_welfare })
            })
            .collect::<Result<Vec<_>, FitnessError>>()?;
        Ok(Self { objective, sigma, instances })
    }

    /// K
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// ω′ and φ of an allocation on instance `k`.
    pub fn score_allocation(&self, k: usize, allocation: &Allocation) -> Result<InstanceScore, FitnessError> {
        let t = &self.instances[k];
        let wrap = |source| FitnessError::Fairness { name: t.name.clone(), source };
        let welfare = utilitarian_welfare(&t.instance, &t.profile, allocation, self.objective)?;
        // with nothing valued, every allocation is optimal
        let omega_prime = if t.optimal_welfare.is_zero() {
            1.0
        } else {
            normalized_welfare(&welfare, &t.optimal_welfare).map_err(wrap)?
        };
        let report = strong_ejr_approx(&t.groups, &t.instance, &t.profile, allocation, self.objective, self.sigma)
            .map_err(wrap)?;
        Ok(InstanceScore { omega_prime, phi: report.phi })
    }

    /// Per-instance scores of a fixed rule.
    pub fn rule_scores(&self, rule: &RuleId) -> Result<Vec<InstanceScore>, FitnessError> {
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let t = &self.instances[k];
                let pi = rule
                    .run(&t.instance, &t.profile, self.objective)
                    .map_err(|source| FitnessError::Rule { name: t.name.clone(), source })?;
                self.score_allocation(k, &pi)
            })
            .collect()
    }

    /// Scores a candidate greedily by its expression, each instance under
    /// its own deadline. The first failing instance (in order) decides the
    /// reported failure.
    pub fn evaluate(&self, candidate: &CandidateRule, epsilon: f64, timeout: Duration) -> Result<Evaluation, CandidateFailure> {
        if !candidate.is_valid() {
            return Err(CandidateFailure {
                validity: candidate.validity(),
                message: candidate.error.clone().unwrap_or_default(),
            });
        }
        let results: Vec<Result<InstanceScore, CandidateFailure>> = (0..self.len())
            .into_par_iter()
            .map(|k| {
                let t = &self.instances[k];
                let deadline = Instant::now() + timeout;
                let scores = candidate.evaluate(&t.features, Some(deadline)).map_err(|e| CandidateFailure {
                    validity: if e == EvalError::Timeout { Validity::Timeout } else { Validity::EvalError },
                    message: format!("{}: {e}", t.name),
                })?;
                let fail = |message: String| CandidateFailure { validity: Validity::EvalError, message };
                let pi = rules::greedy_by_scores(&t.instance, &scores).map_err(|e| fail(format!("{}: {e}", t.name)))?;
                if Instant::now() > deadline {
                    return Err(CandidateFailure { validity: Validity::Timeout, message: format!("{}: timed out", t.name) });
                }
                self.score_allocation(k, &pi).map_err(|e| fail(e.to_string()))
            })
            .collect();
        let scores = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(Evaluation { fitness: fitness_from_parts(&scores, epsilon), scores })
    }
}

/// ε = max over rules of mean φ on the training set.
pub fn compute_epsilon(ctx: &EvalContext, baselines: &[RuleId]) -> Result<f64, FitnessError> {
    if ctx.is_empty() {
        return Err(FitnessError::EmptyTrainingSet);
    }
    let means = baselines
        .iter()
        .map(|rule| {
            let scores = ctx.rule_scores(rule)?;
            Ok(scores.iter().map(|s| s.phi).sum::<f64>() / scores.len() as f64)
        })
        .collect::<Result<Vec<f64>, FitnessError>>()?;
    epsilon_from_means(&means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fairpb_core::model::{Sat, BallotKind};
    use fairpb_core::testkit::{random_case, rng, Shape};

    fn s(omega_prime: f64, phi: f64) -> InstanceScore {
        InstanceScore { omega_prime, phi }
    }

    #[test]
    fn theta_cases() {
        assert_eq!(theta(0.85, 0.9), 1);
        assert_eq!(theta(0.9, 0.9), 0);
        assert_eq!(theta(0.0, 0.0), 0);
        assert_eq!(theta(1.0, 0.0), 0);
    }

    #[test]
    fn fitness_cases() {
        assert!((fitness_from_parts(&[s(0.8, 0.95)], 0.9) - 0.8).abs() < 1e-12);
        assert!((fitness_from_parts(&[s(0.8, 0.85)], 0.9) + 0.2).abs() < 1e-12);
        assert!((fitness_from_parts(&[s(0.9, 0.95), s(0.7, 0.5)], 0.9) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn epsilon_is_max_of_means() {
        assert_eq!(epsilon_from_means(&[0.92, 0.95]).unwrap(), 0.95);
        assert_eq!(epsilon_from_means(&[0.7]).unwrap(), 0.7);
        assert!(matches!(epsilon_from_means(&[]), Err(FitnessError::NoBaselines)));
    }

    fn ctx(seed: u64) -> EvalContext {
        let mut r = rng(seed);
        let items = (0..3)
            .map(|k| {
                let (i, p) = random_case(&mut r, Shape::small(BallotKind::Approval));
                (format!("case{k}"), i, p, None)
            })
            .collect();
        EvalContext::build(items, Objective::ApprovalSat(Sat::Cost), 100).unwrap()
    }

    #[test]
    fn max_util_scores_one() {
        let c = ctx(3);
        for s in c.rule_scores(&RuleId::MaxUtil).unwrap() {
            assert_eq!(s.omega_prime, 1.0);
            assert!((0.0..=1.0).contains(&s.phi));
        }
    }

    #[test]
    fn candidate_evaluation_and_failures() {
        let c = ctx(5);
        let good = CandidateRule::new("cheap", "1/cost");
        let eval = c.evaluate(&good, 0.0, Duration::from_secs(5)).unwrap();
        assert_eq!(eval.scores.len(), 3);
        let mean: f64 = eval.scores.iter().map(|s| s.omega_prime).sum::<f64>() / 3.0;
        assert!((eval.fitness - mean).abs() < 1e-12);
        let bad = CandidateRule::new("broken", "cost/0");
        assert_eq!(c.evaluate(&bad, 0.0, Duration::from_secs(5)).unwrap_err().validity, Validity::EvalError);
        let unparsed = CandidateRule::new("junk", "cost +");
        assert_eq!(c.evaluate(&unparsed, 0.0, Duration::from_secs(5)).unwrap_err().validity, Validity::ParseError);
        let slow = c.evaluate(&good, 0.0, Duration::ZERO).unwrap_err();
        assert_eq!(slow.validity, Validity::Timeout);
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(
            EvalContext::build(Vec::new(), Objective::CardinalUtility, 100),
            Err(FitnessError::EmptyTrainingSet)
        ));
    }
}
