//! Exact 0/1 knapsack by branch-and-bound.
//!
//! Budgets in real data run to 10^9 minor units, which rules out the
//! pseudo-polynomial table. With at most a few dozen items the search below
//! is fast: a first pass finds the optimal value, a second walks subsets in
//! lexicographic order of their sorted index sequence and stops at the first
//! one that attains it.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};

use crate::model::{rat_int, Money, Rat};

#[derive(Debug, Clone)]
pub struct Item {
    pub cost: Money,
    pub value: Rat,
}

struct Solver<'a> {
    items: &'a [Item],
    /// item positions by value density, best first
    by_density: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(items: &'a [Item]) -> Self {
        let mut by_density: Vec<usize> = (0..items.len()).filter(|&k| items[k].value.is_positive()).collect();
        by_density.sort_by(|&a, &b| {
            // v_a/c_a > v_b/c_b  <=>  v_a·c_b > v_b·c_a
            let lhs = &items[a].value * rat_int(items[b].cost);
            let rhs = &items[b].value * rat_int(items[a].cost);
            rhs.cmp(&lhs).then(a.cmp(&b))
        });
        Self { items, by_density }
    }

    /// Fractional-relaxation bound over items with position >= `from`.
    fn bound(&self, from: usize, capacity: Money) -> Rat {
        let mut left = capacity;
        let mut total = Rat::zero();
        for &k in &self.by_density {
            if k < from {
                continue;
            }
            let item = &self.items[k];
            if item.cost <= left {
                left -= item.cost;
                total += &item.value;
            } else {
                total += &item.value * Rat::new(left.into(), item.cost.into());
                break;
            }
        }
        total
    }

    fn best_value(&self, capacity: Money) -> Rat {
        let mut best = Rat::zero();
        self.search_value(0, capacity, Rat::zero(), &mut best);
        best
    }

    fn search_value(&self, k: usize, capacity: Money, value: Rat, best: &mut Rat) {
        if value > *best {
            *best = value.clone();
        }
        if k == self.items.len() || &value + self.bound(k, capacity) <= *best {
            return;
        }
        let item = &self.items[k];
        if item.cost <= capacity {
            self.search_value(k + 1, capacity - item.cost, &value + &item.value, best);
        }
        self.search_value(k + 1, capacity, value, best);
    }

    /// First subset in lexicographic order whose value reaches `target`.
    fn first_reaching(&self, k: usize, capacity: Money, value: &Rat, target: &Rat, chosen: &mut Vec<usize>) -> bool {
        if value >= target {
            return true;
        }
        if k == self.items.len() || value + self.bound(k, capacity) < *target {
            return false;
        }
        let item = &self.items[k];
        if item.cost <= capacity {
            chosen.push(k);
            if self.first_reaching(k + 1, capacity - item.cost, &(value + &item.value), target, chosen) {
                return true;
            }
            chosen.pop();
        }
        self.first_reaching(k + 1, capacity, value, target, chosen)
    }
}

/// Maximizes total value within `capacity`. Among optimal subsets returns
/// the lexicographically smallest ascending position sequence, with its value.
pub fn solve(items: &[Item], capacity: Money) -> (Vec<usize>, Rat) {
    let solver = Solver::new(items);
    let best = solver.best_value(capacity);
    let mut chosen = Vec::new();
    let found = solver.first_reaching(0, capacity, &Rat::zero(), &best, &mut chosen);
    debug_assert!(found);
    (chosen, best)
}

/// Reference enumeration over all 2^k subsets, same tie-breaking. Only for
/// small inputs.
pub fn solve_exhaustive(items: &[Item], capacity: Money) -> (Vec<usize>, Rat) {
    let k = items.len();
    assert!(k < 32, "exhaustive knapsack limited to fewer than 32 items");
    let mut best: Option<(Vec<usize>, Rat)> = None;
    for mask in 0u32..(1u32 << k) {
        let set: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
        let cost: Money = set.iter().map(|&j| items[j].cost).sum();
        if cost > capacity {
            continue;
        }
        let value: Rat = set.iter().map(|&j| items[j].value.clone()).sum();
        let better = match &best {
            None => true,
            Some((bset, bval)) => match value.cmp(bval) {
                Ordering::Greater => true,
                Ordering::Equal => set < *bset,
                Ordering::Less => false,
            },
        };
        if better {
            best = Some((set, value));
        }
    }
    best.unwrap_or_default()
}
