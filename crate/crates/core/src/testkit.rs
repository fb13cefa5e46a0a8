//! Seeded random instances, allocations and expressions for tests and
//! benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::{validate, BinaryOp, Expr, Feature, Reduction, RuleAst, UnaryOp};
use crate::model::{rat, Allocation, BallotKind, Instance, Money, Profile};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_voters: usize,
    pub max_projects: usize,
    pub max_cost: Money,
    pub kind: BallotKind,
}

impl Shape {
    pub fn small(kind: BallotKind) -> Self {
        Self { max_voters: 8, max_projects: 6, max_cost: 20, kind }
    }
}

/// Random instance and profile. Budgets fall anywhere between the cheapest
/// project and the total cost; cardinal scores are multiples of 1/4.
pub fn random_case(r: &mut impl Rng, shape: Shape) -> (Instance, Profile) {
    let n = r.random_range(1..=shape.max_voters);
    let m = r.random_range(1..=shape.max_projects);
    let costs: Vec<Money> = (0..m).map(|_| r.random_range(1..=shape.max_cost)).collect();
    let total: Money = costs.iter().sum();
    let cheapest = *costs.iter().min().expect("m >= 1");
    let budget = r.random_range(cheapest..=total);
    let instance = Instance::from_costs(&costs, budget).expect("positive costs and budget");
    let density: f64 = r.random_range(0.2..0.9);
    let profile = match shape.kind {
        BallotKind::Approval => {
            let ballots = (0..n).map(|_| (0..m).filter(|_| r.random_bool(density)).collect()).collect();
            Profile::approval(m, ballots).expect("indices in range")
        }
        BallotKind::Cardinal => {
            let ballots = (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| if r.random_bool(density) { rat(r.random_range(1..=4), 4) } else { rat(0, 1) })
                        .collect()
                })
                .collect();
            Profile::cardinal(m, ballots).expect("well-formed scores")
        }
    };
    (instance, profile)
}

/// Random feasible allocation: projects in random order, each kept with
/// probability 1/2 if it fits.
pub fn random_allocation(r: &mut impl Rng, instance: &Instance) -> Allocation {
    let mut order: Vec<usize> = (0..instance.num_projects()).collect();
    order.shuffle(r);
    let mut left = instance.budget();
    let mut picked = Vec::new();
    for p in order {
        if instance.cost(p) <= left && r.random_bool(0.5) {
            left -= instance.cost(p);
            picked.push(p);
        }
    }
    Allocation::new(instance, picked).expect("fits by construction")
}

fn random_expr(r: &mut impl Rng, depth: usize) -> Expr {
    let vector_features = [Feature::Cost, Feature::AppCount, Feature::AppRate, Feature::ScoreSum, Feature::ScoreMean];
    let scalar_features = [Feature::Budget, Feature::Voters, Feature::Projects];
    if depth <= 1 || r.random_bool(0.25) {
        return match r.random_range(0..4) {
            0 => Expr::Const((r.random_range(1..=40) as f64) / 4.0),
            1 => Expr::Feature(scalar_features[r.random_range(0..scalar_features.len())]),
            _ => Expr::Feature(vector_features[r.random_range(0..vector_features.len())]),
        };
    }
    let sub = |r: &mut _| Box::new(random_expr(r, depth - 1));
    match r.random_range(0..10) {
        0 => Expr::Unary([UnaryOp::Neg, UnaryOp::Abs, UnaryOp::Sqrt, UnaryOp::Log1p, UnaryOp::Exp][r.random_range(0..5)], sub(r)),
        1 => Expr::Reduce([Reduction::Sum, Reduction::Mean, Reduction::Max, Reduction::Min][r.random_range(0..4)], sub(r)),
        _ => {
            let ops = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Min, BinaryOp::Max, BinaryOp::Pow];
            Expr::Binary(ops[r.random_range(0..ops.len())], sub(r), sub(r))
        }
    }
}

/// Random well-formed rule expression of at most `depth` levels. Shape
/// violations are repaired by multiplying with a vector feature.
pub fn random_rule(r: &mut impl Rng, depth: usize) -> RuleAst {
    loop {
        let e = random_expr(r, depth.max(2));
        let fixed = match validate(e.clone()) {
            Ok(ast) => return ast,
            Err(_) => Expr::Binary(BinaryOp::Mul, Box::new(Expr::Feature(Feature::AppRate)), Box::new(e)),
        };
        if let Ok(ast) = validate(fixed) {
            return ast;
        }
    }
}
