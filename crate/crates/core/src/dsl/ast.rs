use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Cost,
    AppCount,
    AppRate,
    ScoreSum,
    ScoreMean,
    Budget,
    Voters,
    Projects,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Cost,
        Feature::AppCount,
        Feature::AppRate,
        Feature::ScoreSum,
        Feature::ScoreMean,
        Feature::Budget,
        Feature::Voters,
        Feature::Projects,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Cost => "cost",
            Feature::AppCount => "app_count",
            Feature::AppRate => "app_rate",
            Feature::ScoreSum => "score_sum",
            Feature::ScoreMean => "score_mean",
            Feature::Budget => "budget",
            Feature::Voters => "n",
            Feature::Projects => "m",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn is_vector(self) -> bool {
        !matches!(self, Feature::Budget | Feature::Voters | Feature::Projects)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Log,
    Log1p,
    Exp,
    Abs,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Log => "log",
            UnaryOp::Log1p => "log1p",
            UnaryOp::Exp => "exp",
            UnaryOp::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        [UnaryOp::Neg, UnaryOp::Sqrt, UnaryOp::Log, UnaryOp::Log1p, UnaryOp::Exp, UnaryOp::Abs]
            .into_iter()
            .find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    pub fn is_commutative(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Mul | BinaryOp::Min | BinaryOp::Max)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
    Min,
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
            Reduction::Max => "max",
            Reduction::Min => "min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Feature(Feature),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Reduce(Reduction, Box<Expr>),
}

impl Expr {
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Feature(_) => 1,
            Expr::Unary(_, a) | Expr::Reduce(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Feature(_) => 1,
            Expr::Unary(_, a) | Expr::Reduce(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Result shape, or None if a reduction is applied to a scalar.
    pub fn shape(&self) -> Option<Shape> {
        match self {
            Expr::Const(_) => Some(Shape::Scalar),
            Expr::Feature(f) => Some(if f.is_vector() { Shape::Vector } else { Shape::Scalar }),
            Expr::Unary(_, a) => a.shape(),
            Expr::Reduce(_, a) => match a.shape()? {
                Shape::Vector => Some(Shape::Scalar),
                Shape::Scalar => None,
            },
            Expr::Binary(_, a, b) => match (a.shape()?, b.shape()?) {
                (Shape::Scalar, Shape::Scalar) => Some(Shape::Scalar),
                _ => Some(Shape::Vector),
            },
        }
    }

    pub fn has_feature(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Feature(_) => true,
            Expr::Unary(_, a) | Expr::Reduce(_, a) => a.has_feature(),
            Expr::Binary(_, a, b) => a.has_feature() || b.has_feature(),
        }
    }
}

/// A validated rule expression: within the size bounds and vector-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleAst {
    root: Expr,
}

impl RuleAst {
    /// Callers outside the parser must uphold the bounds; see
    /// [`super::validate`].
    pub(crate) fn new_unchecked(root: Expr) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::canonical::print(&self.root))
    }
}
