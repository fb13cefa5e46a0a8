use std::time::Instant;

use super::ast::{BinaryOp, Expr, Feature, Reduction, RuleAst, UnaryOp};
use super::EvalError;
use crate::model::{rat_to_f64, BallotKind, Instance, Profile, MINOR_PER_MAJOR};

/// Columnar statistics an expression may refer to. Money is in major
/// currency units. For approval ballots the score features are taken over
/// the 0/1 approval matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub cost: Vec<f64>,
    pub app_count: Vec<f64>,
    pub app_rate: Vec<f64>,
    pub score_sum: Vec<f64>,
    pub score_mean: Vec<f64>,
    pub budget: f64,
    pub n: f64,
    pub m: f64,
}

impl FeatureSet {
    pub fn new(instance: &Instance, profile: &Profile) -> Self {
        let major = MINOR_PER_MAJOR as f64;
        let n = profile.num_voters() as f64;
        let app_count: Vec<f64> = profile.approval_counts().into_iter().map(|c| c as f64).collect();
        let score_sum: Vec<f64> = match profile.kind() {
            BallotKind::Approval => app_count.clone(),
            BallotKind::Cardinal => profile.score_sums().iter().map(rat_to_f64).collect(),
        };
        Self {
            cost: instance.projects().iter().map(|p| p.cost as f64 / major).collect(),
            app_rate: app_count.iter().map(|c| c / n).collect(),
            score_mean: score_sum.iter().map(|s| s / n).collect(),
            app_count,
            score_sum,
            budget: instance.budget() as f64 / major,
            n,
            m: instance.num_projects() as f64,
        }
    }

    pub fn num_projects(&self) -> usize {
        self.cost.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

struct Evaluator<'a> {
    features: &'a FeatureSet,
    deadline: Option<Instant>,
}

fn finite(op: &'static str, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(op))
    }
}

fn unary(op: UnaryOp, x: f64) -> Result<f64, EvalError> {
    let v = match op {
        UnaryOp::Neg => -x,
        UnaryOp::Abs => x.abs(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err(EvalError::Domain("sqrt"));
            }
            x.sqrt()
        }
        UnaryOp::Log => {
            if x <= 0.0 {
                return Err(EvalError::Domain("log"));
            }
            x.ln()
        }
        UnaryOp::Log1p => {
            if x <= -1.0 {
                return Err(EvalError::Domain("log1p"));
            }
            x.ln_1p()
        }
    };
    finite(op.name(), v)
}

fn binary(op: BinaryOp, a: f64, b: f64) -> Result<f64, EvalError> {
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
        BinaryOp::Pow => a.powf(b),
        BinaryOp::Min => a.min(b),
        BinaryOp::Max => a.max(b),
    };
    finite(op.symbol(), v)
}

impl Evaluator<'_> {
    fn eval(&self, e: &Expr) -> Result<Value, EvalError> {
        if let Some(d) = self.deadline {
            if Instant::now() > d {
                return Err(EvalError::Timeout);
            }
        }
        Ok(match e {
            Expr::Const(v) => Value::Scalar(finite("constant", *v)?),
            Expr::Feature(f) => self.feature(*f),
            Expr::Unary(op, a) => match self.eval(a)? {
                Value::Scalar(x) => Value::Scalar(unary(*op, x)?),
                Value::Vector(xs) => Value::Vector(xs.into_iter().map(|x| unary(*op, x)).collect::<Result<_, _>>()?),
            },
            Expr::Binary(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                match (a, b) {
                    (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(binary(*op, x, y)?),
                    (Value::Scalar(x), Value::Vector(ys)) => {
                        Value::Vector(ys.into_iter().map(|y| binary(*op, x, y)).collect::<Result<_, _>>()?)
                    }
                    (Value::Vector(xs), Value::Scalar(y)) => {
                        Value::Vector(xs.into_iter().map(|x| binary(*op, x, y)).collect::<Result<_, _>>()?)
                    }
                    (Value::Vector(xs), Value::Vector(ys)) => Value::Vector(
                        xs.into_iter().zip(ys).map(|(x, y)| binary(*op, x, y)).collect::<Result<_, _>>()?,
                    ),
                }
            }
            Expr::Reduce(red, a) => {
                let Value::Vector(xs) = self.eval(a)? else {
                    return Err(EvalError::Shape);
                };
                if xs.is_empty() {
                    return Err(EvalError::EmptyReduction);
                }
                let v = match red {
                    Reduction::Sum => xs.iter().sum(),
                    Reduction::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
                    Reduction::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Reduction::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
                };
                Value::Scalar(finite(red.name(), v)?)
            }
        })
    }

    fn feature(&self, f: Feature) -> Value {
        let fs = self.features;
        match f {
            Feature::Cost => Value::Vector(fs.cost.clone()),
            Feature::AppCount => Value::Vector(fs.app_count.clone()),
            Feature::AppRate => Value::Vector(fs.app_rate.clone()),
            Feature::ScoreSum => Value::Vector(fs.score_sum.clone()),
            Feature::ScoreMean => Value::Vector(fs.score_mean.clone()),
            Feature::Budget => Value::Scalar(fs.budget),
            Feature::Voters => Value::Scalar(fs.n),
            Feature::Projects => Value::Scalar(fs.m),
        }
    }
}

/// One score per project. Fails on any non-finite intermediate value,
/// log of a non-positive number, or division by zero.
pub fn evaluate_features(ast: &RuleAst, features: &FeatureSet, deadline: Option<Instant>) -> Result<Vec<f64>, EvalError> {
    match (Evaluator { features, deadline }).eval(ast.root())? {
        Value::Vector(v) => Ok(v),
        Value::Scalar(_) => Err(EvalError::Shape),
    }
}

pub fn evaluate_rule(ast: &RuleAst, instance: &Instance, profile: &Profile) -> Result<Vec<f64>, EvalError> {
    evaluate_features(ast, &FeatureSet::new(instance, profile), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_rule;

    fn fs(cost: &[f64], app_rate: &[f64], budget: f64) -> FeatureSet {
        FeatureSet {
            cost: cost.to_vec(),
            app_count: app_rate.iter().map(|r| r * 4.0).collect(),
            app_rate: app_rate.to_vec(),
            score_sum: app_rate.iter().map(|r| r * 4.0).collect(),
            score_mean: app_rate.to_vec(),
            budget,
            n: 4.0,
            m: cost.len() as f64,
        }
    }

    fn eval(src: &str, f: &FeatureSet) -> Result<Vec<f64>, EvalError> {
        evaluate_features(&parse_rule(src).unwrap(), f, None)
    }

    #[test]
    fn learned_rule_arithmetic() {
        let f = fs(&[100.0], &[0.25], 100.0);
        let v = eval("sqrt(app_rate) * (1 / (1 + cost / budget))", &f).unwrap();
        assert!((v[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn broadcasting_and_reductions() {
        let f = fs(&[1.0, 3.0], &[0.5, 1.0], 10.0);
        assert_eq!(eval("cost - mean(cost)", &f).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(eval("max(cost, 2)", &f).unwrap(), vec![2.0, 3.0]);
        assert_eq!(eval("cost * 0 + max(app_rate) + m", &f).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn invalid_math_fails() {
        let f = fs(&[1.0, 3.0], &[0.0, 1.0], 10.0);
        assert_eq!(eval("cost / 0", &f), Err(EvalError::DivisionByZero));
        assert_eq!(eval("cost / (app_rate - app_rate)", &f), Err(EvalError::DivisionByZero));
        assert_eq!(eval("log(app_rate)", &f), Err(EvalError::Domain("log")));
        assert_eq!(eval("sqrt(neg(cost))", &f), Err(EvalError::Domain("sqrt")));
        assert_eq!(eval("exp(cost * 1000)", &f), Err(EvalError::NonFinite("exp")));
        assert_eq!(eval("log1p(app_rate)", &f).unwrap()[0], 0.0);
    }

    #[test]
    fn features_from_profile() {
        let inst = Instance::from_costs(&[1000, 250], 2000).unwrap();
        let prof = Profile::approval(2, vec![vec![0, 1], vec![0], vec![], vec![0]]).unwrap();
        let f = FeatureSet::new(&inst, &prof);
        assert_eq!(f.cost, vec![10.0, 2.5]);
        assert_eq!(f.budget, 20.0);
        assert_eq!(f.app_count, vec![3.0, 1.0]);
        assert_eq!(f.app_rate, vec![0.75, 0.25]);
        assert_eq!(f.score_mean, f.app_rate);
        assert_eq!((f.n, f.m), (4.0, 2.0));
    }

    #[test]
    fn expired_deadline_times_out() {
        let f = fs(&[1.0], &[0.5], 1.0);
        let ast = parse_rule("cost").unwrap();
        let past = Instant::now() - std::time::Duration::from_millis(1);
        assert_eq!(evaluate_features(&ast, &f, Some(past)), Err(EvalError::Timeout));
    }
}
