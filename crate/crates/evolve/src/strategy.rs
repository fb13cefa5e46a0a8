use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Exploration,
    Modification,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Exploration => "exploration",
            StrategyKind::Modification => "modification",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Initial,
    Refined,
}

const EXPLORATION_SEED: &str = "Propose a new scoring strategy whose form differs entirely from both \
parent strategies, rather than a variation of either.";

const MODIFICATION_SEED: &str = "If the fitness shown is positive, find the key parameters of the scoring \
expression and propose a version with different parameter values. If it is negative, rework the \
expression so that projects backed by a large enough group of voters are funded more reliably.";

/// An instruction used to ask for offspring rules, with the fitness of the
/// valid rules it has produced so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub id: String,
    pub kind: StrategyKind,
    pub text: String,
    pub provenance: Provenance,
    /// generation in which the strategy was introduced
    pub born: usize,
    /// fitness of every valid rule produced, in production order
    pub produced: Vec<f64>,
    pub attempts: usize,
}

impl PromptStrategy {
    pub fn new(id: impl Into<String>, kind: StrategyKind, text: impl Into<String>, provenance: Provenance, born: usize) -> Self {
        Self { id: id.into(), kind, text: text.into(), provenance, born, produced: Vec::new(), attempts: 0 }
    }

    /// Mean fitness of the best `d` produced rules; None before any valid rule.
    pub fn score(&self, d: usize) -> Option<f64> {
        if self.produced.is_empty() {
            return None;
        }
        let mut best = self.produced.clone();
        best.sort_by(|a, b| b.total_cmp(a));
        best.truncate(d.max(1));
        Some(best.iter().sum::<f64>() / best.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Settlement {
    Accepted(String),
    Rejected(String),
    Evicted(String),
}

/// Active strategies plus newly proposed ones on probation. A proposal
/// joins the active set once one of its rules turns out valid and is
/// dropped if its first batch is all invalid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySet {
    active: Vec<PromptStrategy>,
    pending: Vec<PromptStrategy>,
    exploration_cursor: usize,
    modification_cursor: usize,
    next_id: usize,
}

impl Default for StrategySet {
    fn default() -> Self {
        Self::initial()
    }
}

impl StrategySet {
    pub fn initial() -> Self {
        Self {
            active: vec![
                PromptStrategy::new("E1", StrategyKind::Exploration, EXPLORATION_SEED, Provenance::Initial, 0),
                PromptStrategy::new("M1", StrategyKind::Modification, MODIFICATION_SEED, Provenance::Initial, 0),
            ],
            pending: Vec::new(),
            exploration_cursor: 0,
            modification_cursor: 0,
            next_id: 1,
        }
    }

    pub fn active(&self) -> &[PromptStrategy] {
        &self.active
    }

    pub fn pending(&self) -> &[PromptStrategy] {
        &self.pending
    }

    pub fn get(&self, id: &str) -> Option<&PromptStrategy> {
        self.active.iter().chain(&self.pending).find(|s| s.id == id)
    }

    fn get_mut(&mut self, id: &str) -> Option<&mut PromptStrategy> {
        self.active.iter_mut().chain(self.pending.iter_mut()).find(|s| s.id == id)
    }

    pub fn of_kind(&self, kind: StrategyKind) -> impl Iterator<Item = &PromptStrategy> {
        self.active.iter().filter(move |s| s.kind == kind)
    }

    /// Strategy ids for `slots` offspring of one kind: each pending proposal
    /// of that kind once, then the active ones round-robin.
    pub fn schedule(&mut self, kind: StrategyKind, slots: usize) -> Vec<String> {
        let mut out: Vec<String> = self.pending.iter().filter(|s| s.kind == kind).map(|s| s.id.clone()).take(slots).collect();
        let ring: Vec<String> = self.of_kind(kind).map(|s| s.id.clone()).collect();
        if ring.is_empty() {
            return out;
        }
        let cursor = match kind {
            StrategyKind::Exploration => &mut self.exploration_cursor,
            StrategyKind::Modification => &mut self.modification_cursor,
        };
        while out.len() < slots {
            out.push(ring[*cursor % ring.len()].clone());
            *cursor = (*cursor + 1) % ring.len();
        }
        out
    }

    /// Notes one finished attempt; `fitness` is None for an invalid rule.
    pub fn record(&mut self, id: &str, fitness: Option<f64>) {
        if let Some(s) = self.get_mut(id) {
            s.attempts += 1;
            if let Some(q) = fitness {
                s.produced.push(q);
            }
        }
    }

    /// Puts a refined strategy on probation and returns its id.
    pub fn propose(&mut self, kind: StrategyKind, text: impl Into<String>, generation: usize) -> String {
        let prefix = match kind {
            StrategyKind::Exploration => "EN",
            StrategyKind::Modification => "MN",
        };
        let id = format!("{prefix}{}", self.next_id);
        self.next_id += 1;
        self.pending.push(PromptStrategy::new(id.clone(), kind, text, Provenance::Refined, generation));
        id
    }

    /// Resolves tried proposals, then evicts the lowest-scoring active
    /// strategies until at most `max` remain. Strategies without a valid
    /// rule count as −∞; ties evict the newer one. The last strategy of a
    /// kind is never evicted, nor is an unproductive one in the generation
    /// it was introduced.
    pub fn settle(&mut self, generation: usize, max: usize, window: usize) -> Vec<Settlement> {
        let mut events = Vec::new();
        let pending = std::mem::take(&mut self.pending);
        for s in pending {
            if s.attempts == 0 {
                self.pending.push(s);
            } else if s.produced.is_empty() {
                events.push(Settlement::Rejected(s.id));
            } else {
                events.push(Settlement::Accepted(s.id.clone()));
                self.active.push(s);
            }
        }
        while self.active.len() > max {
            let victim = self
                .active
                .iter()
                .enumerate()
                .filter(|(_, s)| self.of_kind(s.kind).count() > 1)
                .filter(|(_, s)| !(s.produced.is_empty() && s.born == generation))
                .min_by(|(ia, a), (ib, b)| {
                    let sa = a.score(window).unwrap_or(f64::NEG_INFINITY);
                    let sb = b.score(window).unwrap_or(f64::NEG_INFINITY);
                    sa.total_cmp(&sb).then(ib.cmp(ia))
                })
                .map(|(i, _)| i);
            match victim {
                Some(i) => events.push(Settlement::Evicted(self.active.remove(i).id)),
                None => break,
            }
        }
        if !events.is_empty() {
            self.exploration_cursor = 0;
            self.modification_cursor = 0;
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_averages_top_d() {
        let mut s = PromptStrategy::new("x", StrategyKind::Exploration, "t", Provenance::Initial, 0);
        assert_eq!(s.score(3), None);
        s.produced = vec![0.1, 0.9, 0.5, 0.7];
        assert!((s.score(3).unwrap() - 0.7).abs() < 1e-12);
        s.produced = vec![0.4];
        assert_eq!(s.score(3), Some(0.4));
    }

    #[test]
    fn schedule_puts_proposals_first_then_rotates() {
        let mut set = StrategySet::initial();
        let id = set.propose(StrategyKind::Exploration, "new", 1);
        assert_eq!(set.schedule(StrategyKind::Exploration, 3), vec![id.clone(), "E1".into(), "E1".into()]);
        assert_eq!(set.schedule(StrategyKind::Modification, 2), vec!["M1".to_string(), "M1".into()]);
    }

    #[test]
    fn all_invalid_proposal_is_rejected() {
        let mut set = StrategySet::initial();
        let id = set.propose(StrategyKind::Modification, "bad idea", 2);
        set.record(&id, None);
        set.record(&id, None);
        assert_eq!(set.settle(2, 5, 3), vec![Settlement::Rejected(id)]);
        assert_eq!(set.active().len(), 2);
    }

    #[test]
    fn untried_proposal_stays_pending() {
        let mut set = StrategySet::initial();
        set.propose(StrategyKind::Modification, "later", 2);
        assert!(set.settle(2, 5, 3).is_empty());
        assert_eq!(set.pending().len(), 1);
    }

    #[test]
    fn overflow_evicts_lowest_scores() {
        let mut set = StrategySet::initial();
        set.record("E1", Some(0.5));
        set.record("M1", Some(0.5));
        // three more active strategies, then two accepted proposals
        for (kind, q) in [(StrategyKind::Exploration, 0.2), (StrategyKind::Modification, 0.9), (StrategyKind::Exploration, 0.6)] {
            let id = set.propose(kind, "x", 1);
            set.record(&id, Some(q));
        }
        set.settle(1, 5, 3);
        assert_eq!(set.active().len(), 5);
        let a = set.propose(StrategyKind::Exploration, "a", 2);
        set.record(&a, Some(0.95));
        let b = set.propose(StrategyKind::Modification, "b", 2);
        set.record(&b, Some(0.1));
        let events = set.settle(2, 5, 3);
        assert_eq!(
            events,
            vec![
                Settlement::Accepted(a),
                Settlement::Accepted(b.clone()),
                Settlement::Evicted(b),
                Settlement::Evicted("EN1".into()),
            ]
        );
        assert_eq!(set.active().len(), 5);
    }

    #[test]
    fn last_of_a_kind_survives() {
        let mut set = StrategySet::initial();
        for q in [0.7, 0.8, 0.9, 0.95] {
            let id = set.propose(StrategyKind::Exploration, "x", 1);
            set.record(&id, Some(q));
        }
        set.settle(1, 2, 3);
        assert_eq!(set.active().len(), 2);
        assert_eq!(set.of_kind(StrategyKind::Modification).count(), 1);
        assert_eq!(set.active()[1].score(3), Some(0.95));
    }
}
