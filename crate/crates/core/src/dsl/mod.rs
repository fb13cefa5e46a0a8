//! A small expression language for greedy priority rules.
//!
//! An expression maps per-project feature vectors to one score per project;
//! the allocation is the greedy scan in descending score order. See
//! `docs/dsl.md` for the grammar.

mod ast;
mod canonical;
mod eval;
mod external;
mod extract;
mod parser;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{BinaryOp, Expr, Feature, Reduction, RuleAst, Shape, UnaryOp};
pub use canonical::{canonical_form, normalize, print};
pub use eval::{evaluate_features, evaluate_rule, FeatureSet};
pub use external::{parse_score_line, ExternalRule};
pub use extract::extract_candidate;
pub use parser::parse_rule;

use crate::model::{Instance, Profile};
use crate::rules::{RuleError, ScoreRule};

pub const MAX_DEPTH: usize = 32;
pub const MAX_NODES: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("{0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{name}` takes {expected} argument(s), got {got}")]
    Arity { name: String, expected: &'static str, got: usize },
    #[error("expression deeper than {0} levels")]
    TooDeep(usize),
    #[error("expression has more than {0} nodes")]
    TooManyNodes(usize),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: {kind}")]
pub struct DslError {
    pub offset: usize,
    pub kind: DslErrorKind,
}

impl DslError {
    pub fn new(offset: usize, kind: DslErrorKind) -> Self {
        Self { offset, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("{0} of an out-of-domain argument")]
    Domain(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("reduction over zero projects")]
    EmptyReduction,
    #[error("expression does not yield one score per project")]
    Shape,
    #[error("evaluation deadline exceeded")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no brace-delimited description found")]
    MissingDescription,
    #[error("no rule body found")]
    EmptyBody,
}

/// Checks the size bounds and that the root is a per-project vector.
pub fn validate(root: Expr) -> Result<RuleAst, DslError> {
    let depth = root.depth();
    if depth > MAX_DEPTH {
        return Err(DslError::new(0, DslErrorKind::TooDeep(MAX_DEPTH)));
    }
    if root.node_count() > MAX_NODES {
        return Err(DslError::new(0, DslErrorKind::TooManyNodes(MAX_NODES)));
    }
    match root.shape() {
        Some(Shape::Vector) => Ok(RuleAst::new_unchecked(root)),
        Some(Shape::Scalar) => Err(DslError::new(0, DslErrorKind::Shape("expression must depend on a per-project feature".into()))),
        None => Err(DslError::new(0, DslErrorKind::Shape("reduction applied to a scalar".into()))),
    }
}

/// A parsed expression usable as a scoring rule.
#[derive(Debug, Clone)]
pub struct DslRule {
    label: String,
    ast: RuleAst,
}

impl DslRule {
    pub fn new(label: impl Into<String>, ast: RuleAst) -> Self {
        Self { label: label.into(), ast }
    }

    pub fn parse(label: impl Into<String>, text: &str) -> Result<Self, DslError> {
        Ok(Self::new(label, parse_rule(text)?))
    }

    pub fn ast(&self) -> &RuleAst {
        &self.ast
    }
}

impl ScoreRule for DslRule {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn scores(&self, instance: &Instance, profile: &Profile) -> Result<Vec<f64>, RuleError> {
        evaluate_rule(&self.ast, instance, profile)
            .map_err(|e| RuleError::Scorer { rule: self.label.clone(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    ParseError,
    EvalError,
    Timeout,
}

/// A generated rule: free-text description plus expression, with its
/// fitness once evaluated. Only valid candidates carry a fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRule {
    pub description: String,
    pub source: String,
    /// canonical form; absent if the source did not parse
    pub canonical: Option<String>,
    #[serde(skip)]
    ast: Option<RuleAst>,
    fitness: Option<f64>,
    validity: Validity,
    /// why the candidate is invalid, if it is
    pub error: Option<String>,
}

impl CandidateRule {
    /// Parses `source`; a parse failure yields an invalid candidate.
    pub fn new(description: impl Into<String>, source: impl Into<String>) -> Self {
        let description = description.into();
        let source = source.into();
        match parse_rule(&source) {
            Ok(ast) => Self {
                description,
                canonical: Some(canonical_form(&ast)),
                source,
                ast: Some(ast),
                fitness: None,
                validity: Validity::Valid,
                error: None,
            },
            Err(e) => Self {
                description,
                source,
                canonical: None,
                ast: None,
                fitness: None,
                validity: Validity::ParseError,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn from_reply(reply: &str) -> Self {
        match extract_candidate(reply) {
            Ok((d, s)) => Self::new(d, s),
            Err(e) => Self {
                description: String::new(),
                source: reply.to_string(),
                canonical: None,
                ast: None,
                fitness: None,
                validity: Validity::ParseError,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn ast(&self) -> Option<&RuleAst> {
        self.ast.as_ref()
    }

    /// Restores the parsed tree after deserialization.
    pub fn reparse(&mut self) {
        if self.validity == Validity::Valid && self.ast.is_none() {
            self.ast = parse_rule(&self.source).ok();
            if self.ast.is_none() {
                self.invalidate(Validity::ParseError, "source no longer parses");
            }
        }
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    pub fn validity(&self) -> Validity {
        self.validity
    }

    pub fn is_valid(&self) -> bool {
        self.validity == Validity::Valid
    }

    /// Records the fitness of a valid candidate. Ignored for invalid ones.
    pub fn set_fitness(&mut self, q: f64) {
        if self.is_valid() {
            self.fitness = Some(q);
        }
    }

    pub fn invalidate(&mut self, validity: Validity, reason: impl fmt::Display) {
        debug_assert!(validity != Validity::Valid);
        self.validity = validity;
        self.fitness = None;
        self.error = Some(reason.to_string());
    }

    pub fn evaluate(&self, features: &FeatureSet, deadline: Option<Instant>) -> Result<Vec<f64>, EvalError> {
        let ast = self.ast.as_ref().ok_or(EvalError::Shape)?;
        evaluate_features(ast, features, deadline)
    }
}
