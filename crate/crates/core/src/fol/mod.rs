//! First-order consistency rules over task and answer atoms.
//!
//! Formulae are built from three kinds of atoms:
//!
//! - `queryObj(x)`: the probability that sample `x` has the named semantic task,
//! - `ans(x)`: the probability the model assigns to the gold answer of `x`,
//! - a numeric constant in `[0, 1]`.
//!
//! They are combined with the fuzzy connectives of residuated logic and closed
//! with `forall` / `exists`. The textual surface syntax is pure ASCII:
//!
//! | token | connective        |
//! |-------|-------------------|
//! | `~`   | residual negation |
//! | `!`   | strong negation   |
//! | `*`   | strong conjunction (t-norm) |
//! | `&`   | weak conjunction  |
//! | `(+)` | t-conorm          |
//! | `\|`  | weak disjunction  |
//! | `=>`  | residual implication |
//! | `->`  | material implication |
//! | `<=>` | bi-residuum       |
//!
//! Precedence from tightest to loosest: negations, `*`/`&`, `(+)`/`|`,
//! `=>`/`->`, `<=>`. Implications associate to the right, everything else to
//! the left. A quantifier body extends as far right as possible.

mod kb;
mod parser;
mod render;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

pub use kb::{parse_kb, KnowledgeBase, Rule};
pub use parser::parse_formula;
pub use render::render;

/// Name of the reserved answer-match predicate.
pub const ANSWER_PREDICATE: &str = "ans";

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// Truth degree that the sample bound to `var` has semantic task `task`.
    Task { task: String, var: String },
    /// Grounded supervision constraint `A(x) <=> p(x)` for the gold answer.
    /// Labels are positive, so its truth degree is the gold-answer probability.
    AnswerMatch { var: String },
    Const(f64),
}

impl Atom {
    pub fn var(&self) -> Option<&str> {
        match self {
            Atom::Task { var, .. } | Atom::AnswerMatch { var } => Some(var),
            Atom::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    /// `~x`, defined as `x => 0`.
    ResidualNeg,
    /// `!x`, defined as `1 - x`.
    StrongNeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    StrongConj,
    TConorm,
    WeakConj,
    WeakDisj,
    ResidualImply,
    MaterialImply,
    BiResiduum,
}

impl BinaryOp {
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::BiResiduum => 1,
            BinaryOp::ResidualImply | BinaryOp::MaterialImply => 2,
            BinaryOp::TConorm | BinaryOp::WeakDisj => 3,
            BinaryOp::StrongConj | BinaryOp::WeakConj => 4,
        }
    }

    pub(crate) fn right_assoc(self) -> bool {
        matches!(self, BinaryOp::ResidualImply | BinaryOp::MaterialImply)
    }

    pub fn token(self) -> &'static str {
        match self {
            BinaryOp::StrongConj => "*",
            BinaryOp::TConorm => "(+)",
            BinaryOp::WeakConj => "&",
            BinaryOp::WeakDisj => "|",
            BinaryOp::ResidualImply => "=>",
            BinaryOp::MaterialImply => "->",
            BinaryOp::BiResiduum => "<=>",
        }
    }
}

impl UnaryOp {
    pub fn token(self) -> &'static str {
        match self {
            UnaryOp::ResidualNeg => "~",
            UnaryOp::StrongNeg => "!",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    ForAll,
    Exists,
}

impl Quantifier {
    pub fn keyword(self) -> &'static str {
        match self {
            Quantifier::ForAll => "forall",
            Quantifier::Exists => "exists",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Atom(Atom),
    Unary(UnaryOp, Box<Formula>),
    Binary(BinaryOp, Box<Formula>, Box<Formula>),
    Quant(Quantifier, String, Box<Formula>),
}

impl Formula {
    pub fn task(task: impl Into<String>, var: impl Into<String>) -> Self {
        Formula::Atom(Atom::Task {
            task: task.into(),
            var: var.into(),
        })
    }

    pub fn ans(var: impl Into<String>) -> Self {
        Formula::Atom(Atom::AnswerMatch { var: var.into() })
    }

    pub fn constant(value: f64) -> Self {
        Formula::Atom(Atom::Const(value))
    }

    pub fn unary(op: UnaryOp, f: Formula) -> Self {
        Formula::Unary(op, Box::new(f))
    }

    pub fn binary(op: BinaryOp, l: Formula, r: Formula) -> Self {
        Formula::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn forall(var: impl Into<String>, body: Formula) -> Self {
        Formula::Quant(Quantifier::ForAll, var.into(), Box::new(body))
    }

    pub fn exists(var: impl Into<String>, body: Formula) -> Self {
        Formula::Quant(Quantifier::Exists, var.into(), Box::new(body))
    }

    /// Height of the tree; a lone atom has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::Unary(_, f) | Formula::Quant(_, _, f) => 1 + f.depth(),
            Formula::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::Unary(_, f) | Formula::Quant(_, _, f) => 1 + f.node_count(),
            Formula::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Task predicate names in first-occurrence order.
    pub fn task_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| {
            if let Atom::Task { task, .. } = a {
                if !out.contains(&task.as_str()) {
                    out.push(task.as_str());
                }
            }
        });
        out
    }

    pub fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::Atom(a) => f(a),
            Formula::Unary(_, g) | Formula::Quant(_, _, g) => g.visit_atoms(f),
            Formula::Binary(_, l, r) => {
                l.visit_atoms(f);
                r.visit_atoms(f);
            }
        }
    }

    /// Checks predicate names against `vocab`, constant ranges and variable
    /// binding. Every atom variable must be bound by exactly one enclosing
    /// quantifier.
    pub fn validate<V: Vocabulary + ?Sized>(&self, vocab: &V) -> Result<(), FolError> {
        let mut scope = Vec::new();
        self.validate_in(vocab, &mut scope)
    }

    fn validate_in<'a, V: Vocabulary + ?Sized>(
        &'a self,
        vocab: &V,
        scope: &mut Vec<&'a str>,
    ) -> Result<(), FolError> {
        match self {
            Formula::Atom(atom) => {
                match atom {
                    Atom::Task { task, .. } if !vocab.contains_task(task) => {
                        return Err(FolError::UnknownPredicate(task.clone()))
                    }
                    Atom::Const(v) if !(0.0..=1.0).contains(v) => {
                        return Err(FolError::ConstOutOfRange(*v))
                    }
                    _ => {}
                }
                match atom.var() {
                    Some(v) if !scope.contains(&v) => Err(FolError::UnboundVariable(v.to_string())),
                    _ => Ok(()),
                }
            }
            Formula::Unary(_, f) => f.validate_in(vocab, scope),
            Formula::Binary(_, l, r) => {
                l.validate_in(vocab, scope)?;
                r.validate_in(vocab, scope)
            }
            Formula::Quant(_, var, body) => {
                if scope.contains(&var.as_str()) {
                    return Err(FolError::ShadowedVariable(var.clone()));
                }
                scope.push(var);
                let res = body.validate_in(vocab, scope);
                scope.pop();
                res
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

/// Set of admissible task predicate names.
pub trait Vocabulary {
    fn contains_task(&self, name: &str) -> bool;
}

impl Vocabulary for HashSet<String> {
    fn contains_task(&self, name: &str) -> bool {
        self.contains(name)
    }
}

impl Vocabulary for BTreeSet<String> {
    fn contains_task(&self, name: &str) -> bool {
        self.contains(name)
    }
}

impl Vocabulary for [String] {
    fn contains_task(&self, name: &str) -> bool {
        self.iter().any(|t| t == name)
    }
}

impl Vocabulary for Vec<String> {
    fn contains_task(&self, name: &str) -> bool {
        self.as_slice().contains_task(name)
    }
}

impl Vocabulary for [&str] {
    fn contains_task(&self, name: &str) -> bool {
        self.contains(&name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FolError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("variable `{0}` is bound twice")]
    ShadowedVariable(String),
    #[error("constant {0} outside [0, 1]")]
    ConstOutOfRange(f64),
    #[error("duplicate rule name `{0}`")]
    DuplicateRuleName(String),
    #[error("rule `{name}` (line {line}): invalid weight `{weight}`")]
    InvalidWeight {
        name: String,
        line: usize,
        weight: String,
    },
    #[error("line {line}: malformed rule header")]
    MalformedRule { line: usize },
    #[error("rule `{name}` (line {line}): {source}")]
    InRule {
        name: String,
        line: usize,
        #[source]
        source: Box<FolError>,
    },
}
