use std::collections::HashSet;

use fairpb_core::dsl::CandidateRule;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("asked for {wanted} parents from a population of {size}")]
    TooMany { wanted: usize, size: usize },
    #[error("population is empty")]
    Empty,
}

/// At most `capacity` valid rules, best first, distinct by canonical form,
/// with the per-generation fitness history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    capacity: usize,
    members: Vec<CandidateRule>,
    generation: usize,
    /// best fitness after each generation, starting with the initial one
    best_history: Vec<f64>,
    /// leading fitness values after each generation
    top_history: Vec<Vec<f64>>,
}

fn rank_and_trim(candidates: impl IntoIterator<Item = CandidateRule>, capacity: usize) -> Vec<CandidateRule> {
    let mut seen = HashSet::new();
    let mut kept: Vec<CandidateRule> = candidates
        .into_iter()
        .filter(|c| c.is_valid() && c.fitness().is_some())
        .filter(|c| seen.insert(c.canonical.clone().unwrap_or_default()))
        .collect();
    // stable: among equal fitness the earlier candidate ranks higher
    kept.sort_by(|a, b| b.fitness().unwrap_or(f64::NEG_INFINITY).total_cmp(&a.fitness().unwrap_or(f64::NEG_INFINITY)));
    kept.truncate(capacity);
    kept
}

impl Population {
    /// Generation 0 from evaluated initial rules.
    pub fn initial(capacity: usize, rules: Vec<CandidateRule>) -> Self {
        let mut pop = Self {
            capacity,
            members: rank_and_trim(rules, capacity),
            generation: 0,
            best_history: Vec::new(),
            top_history: Vec::new(),
        };
        pop.record();
        pop
    }

    fn record(&mut self) {
        self.best_history.push(self.best_fitness().unwrap_or(f64::NEG_INFINITY));
        self.top_history.push(self.members.iter().filter_map(|c| c.fitness()).collect());
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn members(&self) -> &[CandidateRule] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn best(&self) -> Option<&CandidateRule> {
        self.members.first()
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best().and_then(|c| c.fitness())
    }

    pub fn mean_fitness(&self) -> Option<f64> {
        if self.members.is_empty() {
            return None;
        }
        Some(self.members.iter().filter_map(|c| c.fitness()).sum::<f64>() / self.members.len() as f64)
    }

    pub fn best_history(&self) -> &[f64] {
        &self.best_history
    }

    pub fn top_history(&self) -> &[Vec<f64>] {
        &self.top_history
    }

    pub fn contains_canonical(&self, canonical: &str) -> bool {
        self.members.iter().any(|c| c.canonical.as_deref() == Some(canonical))
    }

    /// Restores parsed trees after loading from a checkpoint.
    pub fn reparse(&mut self) {
        for c in &mut self.members {
            c.reparse();
        }
        self.members.retain(|c| c.is_valid());
    }
}

/// The `capacity` best valid rules among parents and offspring. Parents win
/// ties and canonical duplicates, so the best fitness never drops.
pub fn survive(parents: &Population, offspring: Vec<CandidateRule>) -> Population {
    let members = rank_and_trim(parents.members.iter().cloned().chain(offspring), parents.capacity);
    if members.len() < parents.capacity {
        log::warn!("only {} valid rules for a population of {}", members.len(), parents.capacity);
    }
    let mut next = Population {
        capacity: parents.capacity,
        members,
        generation: parents.generation + 1,
        best_history: parents.best_history.clone(),
        top_history: parents.top_history.clone(),
    };
    next.record();
    next
}

/// Distinct member indices drawn with weight 1/(rank + h), rank 1-based.
pub fn select_parents<R: Rng + ?Sized>(population: &Population, count: usize, rng: &mut R) -> Result<Vec<usize>, SelectError> {
    let size = population.len();
    if size == 0 {
        return Err(SelectError::Empty);
    }
    if count > size {
        return Err(SelectError::TooMany { wanted: count, size });
    }
    let h = population.capacity as f64;
    let ranks: Vec<usize> = (0..size).collect();
    let picked = ranks
        .choose_multiple_weighted(rng, count, |&i| 1.0 / ((i + 1) as f64 + h))
        .expect("weights are finite and positive");
    Ok(picked.copied().collect())
}

/// True when the leading `l` fitness values are identical across the last
/// `t + 1` entries of `history`.
pub fn detect_stagnation(history: &[Vec<f64>], l: usize, t: usize) -> bool {
    if history.len() < t + 1 {
        return false;
    }
    let window = &history[history.len() - t - 1..];
    let head = |v: &Vec<f64>| v.iter().take(l).map(|x| x.to_bits()).collect::<Vec<u64>>();
    let first = head(&window[0]);
    window.iter().all(|v| head(v) == first)
}
