//! A small probabilistic-soft-logic engine.
//!
//! Rules are weighted first-order implications over a fixed set of
//! predicates. Grounding them against a [`SignedNetwork`](crate::graph::SignedNetwork)
//! yields a hinge-loss MRF whose MAP state is found by convex minimization of
//!
//! ```text
//! Σ_r  w_r · scale_g · max(0, d_g(X))^p_r
//! ```
//!
//! over the free atoms `X ∈ [0,1]^n`, with `d_g` the Łukasiewicz distance to
//! satisfaction of ground rule `g`.

mod ground;
mod infer;
mod learn;
pub mod quadrature;
mod syntax;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ground::{
    ground, AtomKey, AtomRef, GroundLiteral, GroundRule, Grounder, GroundScope, HlMrf,
    LatentAtoms, LatentValues, SlotInfo,
};
pub use infer::{map_inference, map_inference_from, Assignment, InferenceMethod, MapResult, SolverConfig};
pub use learn::{
    internal_split, learn_weights, mle_gradient, mple_gradient, surrogate_objective, LearnConfig,
    LearnMethod, LearnReport, MpleTables,
};
pub use syntax::{parse_rule, parse_rules, write_rules};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PslError {
    #[error("rule syntax error on line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("rule {rule}: {msg}")]
    UnsupportedShape { rule: String, msg: String },
    #[error("weight for slot {slot} is not a finite non-negative number: {value}")]
    BadWeight { slot: usize, value: f64 },
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("atom reference {0:?} cannot be resolved")]
    UnresolvedAtom(AtomRef),
    #[error("assignment has {got} values but the MRF has {expected} free atoms")]
    AssignmentSize { expected: usize, got: usize },
    #[error("training set has no {0} edges")]
    DegenerateTraining(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Predicate {
    Upvote,
    Downvote,
    Active,
    Favorable,
}

impl Predicate {
    pub const ALL: [Predicate; 4] = [
        Predicate::Upvote,
        Predicate::Downvote,
        Predicate::Active,
        Predicate::Favorable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::Upvote => "Upvote",
            Predicate::Downvote => "Downvote",
            Predicate::Active => "Active",
            Predicate::Favorable => "Favorable",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Predicate::Upvote | Predicate::Downvote => 2,
            Predicate::Active | Predicate::Favorable => 1,
        }
    }

    pub fn from_name(s: &str) -> Option<Predicate> {
        Predicate::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Edge predicates are defined on the network's edge set; the others on
    /// its nodes.
    pub fn is_edge(self) -> bool {
        self.arity() == 2
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Distance exponent `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Exponent {
    Linear,
    Squared,
}

impl Exponent {
    pub fn value(self) -> u8 {
        match self {
            Exponent::Linear => 1,
            Exponent::Squared => 2,
        }
    }

    #[inline]
    pub fn apply(self, d: f64) -> f64 {
        match self {
            Exponent::Linear => d,
            Exponent::Squared => d * d,
        }
    }

    pub fn from_value(v: u8) -> Option<Exponent> {
        match v {
            1 => Some(Exponent::Linear),
            2 => Some(Exponent::Squared),
            _ => None,
        }
    }
}

/// A possibly negated predicate over rule variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: Predicate,
    pub args: Vec<String>,
    pub negated: bool,
}

impl Literal {
    pub fn new(predicate: Predicate, args: &[&str]) -> Self {
        Literal {
            predicate,
            args: args.iter().map(|s| s.to_string()).collect(),
            negated: false,
        }
    }
}

impl std::ops::Not for Literal {
    type Output = Literal;

    fn not(mut self) -> Literal {
        self.negated = !self.negated;
        self
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("~")?;
        }
        write!(f, "{}({})", self.predicate, self.args.join(","))
    }
}

/// Weighted rule `body₁ & … & bodyₖ -> head`. An empty body reads as true,
/// which turns the rule into a prior on its head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub weight: f64,
    pub body: Vec<Literal>,
    pub head: Literal,
    pub exponent: Exponent,
}

impl Rule {
    pub fn new(id: &str, weight: f64, body: Vec<Literal>, head: Literal, exponent: Exponent) -> Self {
        Rule {
            id: id.to_string(),
            weight,
            body,
            head,
            exponent,
        }
    }

    pub fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.body.iter().chain(std::iter::once(&self.head))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} : ", self.id, fmt_weight(self.weight))?;
        if !self.body.is_empty() {
            let body: Vec<String> = self.body.iter().map(|l| l.to_string()).collect();
            write!(f, "{} -> ", body.join(" & "))?;
        }
        write!(f, "{} ^{}", self.head, self.exponent.value())
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_weight(w: f64) -> String {
    let s = format!("{w}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Łukasiewicz conjunction.
#[inline]
pub fn luk_and(a: f64, b: f64) -> f64 {
    (a + b - 1.0).max(0.0)
}

/// Łukasiewicz negation.
#[inline]
pub fn luk_not(a: f64) -> f64 {
    1.0 - a
}

/// Distance to satisfaction of `body -> head` for the given truth values.
pub fn implication_distance(body: &[f64], head: f64) -> f64 {
    let truth_body = body.iter().copied().fold(1.0, luk_and);
    (truth_body - head).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lukasiewicz_examples() {
        assert_eq!(implication_distance(&[1.0], 1.0), 0.0);
        assert!((implication_distance(&[1.0, 0.8], 0.3) - 0.5).abs() < 1e-12);
        assert_eq!(implication_distance(&[0.2], 0.9), 0.0);
        assert_eq!(luk_not(0.25), 0.75);
    }

    #[test]
    fn exponent_only_changes_power() {
        assert_eq!(Exponent::Squared.apply(0.5), 0.25);
        assert_eq!(Exponent::Linear.apply(0.5), 0.5);
    }
}
