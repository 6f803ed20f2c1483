//! Fuzzy-logic connectives under the three principal t-norms and under
//! additive-generator families.
//!
//! A [`Generator`] `g: [0,1] -> [0,+inf]` is strictly decreasing with
//! `g(1) = 0` and induces the Archimedean t-norm
//! `T(x,y) = g⁻¹(min{g(0⁺), g(x) + g(y)})`. When `g(0⁺)` is finite the t-norm
//! is nilpotent, otherwise strict. Extended values are carried as `f64` with
//! `+inf` as the saturating top element.

use std::fmt;

use crate::fol::{BinaryOp, UnaryOp};

/// Inputs below this floor are raised to it before evaluating a generator,
/// except for exact zero which maps to `g(0⁺)`.
pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Principal {
    Godel,
    Lukasiewicz,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// λ ∈ (−∞, +∞); λ = 0 is the product t-norm and λ = 1 Łukasiewicz.
    SchweizerSklar,
    /// λ ∈ [0, +∞]; λ = 1 is product, λ = +∞ Łukasiewicz, λ = 0 Gödel.
    Frank,
}

/// A parameterized additive generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub family: Family,
    pub lambda: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Semantics {
    Table(Principal),
    Generator(Generator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connective {
    StrongConj,
    TConorm,
    WeakConj,
    WeakDisj,
    ResidualImply,
    BiResiduum,
    MaterialImply,
    ResidualNeg,
    StrongNeg,
}

impl Connective {
    pub fn arity(self) -> usize {
        match self {
            Connective::ResidualNeg | Connective::StrongNeg => 1,
            _ => 2,
        }
    }
}

impl From<BinaryOp> for Connective {
    fn from(op: BinaryOp) -> Self {
        match op {
            BinaryOp::StrongConj => Connective::StrongConj,
            BinaryOp::TConorm => Connective::TConorm,
            BinaryOp::WeakConj => Connective::WeakConj,
            BinaryOp::WeakDisj => Connective::WeakDisj,
            BinaryOp::ResidualImply => Connective::ResidualImply,
            BinaryOp::MaterialImply => Connective::MaterialImply,
            BinaryOp::BiResiduum => Connective::BiResiduum,
        }
    }
}

impl From<UnaryOp> for Connective {
    fn from(op: UnaryOp) -> Self {
        match op {
            UnaryOp::ResidualNeg => Connective::ResidualNeg,
            UnaryOp::StrongNeg => Connective::StrongNeg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TnormError {
    #[error("value {0} outside the admissible domain")]
    Domain(f64),
    #[error("{connective:?} expects {expected} operand(s)")]
    Arity {
        connective: Connective,
        expected: usize,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter λ = {0} for {1:?}")]
    InvalidLambda(f64, Family),
}

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TruthDegree(f64);

impl TruthDegree {
    pub const ONE: TruthDegree = TruthDegree(1.0);
    pub const ZERO: TruthDegree = TruthDegree(0.0);

    pub fn new(value: f64) -> Result<Self, TnormError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(TruthDegree(value))
        } else {
            Err(TnormError::Domain(value))
        }
    }

    /// Clamp a result that may have drifted a few ulps outside `[0, 1]`.
    pub(crate) fn clamped(value: f64) -> Self {
        TruthDegree(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for TruthDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Generator {
    pub fn schweizer_sklar(lambda: f64) -> Result<Self, TnormError> {
        if !lambda.is_finite() {
            return Err(TnormError::InvalidLambda(lambda, Family::SchweizerSklar));
        }
        Ok(Generator {
            family: Family::SchweizerSklar,
            lambda,
            epsilon: DEFAULT_EPSILON,
        })
    }

    /// Frank generator. λ = 0 is Gödel, which has no additive generator.
    pub fn frank(lambda: f64) -> Result<Self, TnormError> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(TnormError::InvalidLambda(lambda, Family::Frank));
        }
        if lambda == 0.0 {
            return Err(TnormError::Unsupported(
                "Frank λ = 0 is the Gödel t-norm, which has no additive generator".into(),
            ));
        }
        Ok(Generator {
            family: Family::Frank,
            lambda,
            epsilon: DEFAULT_EPSILON,
        })
    }

    /// `g(x) = -ln x`.
    pub fn product() -> Self {
        Generator {
            family: Family::SchweizerSklar,
            lambda: 0.0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// `g(x) = 1 - x`.
    pub fn lukasiewicz() -> Self {
        Generator {
            family: Family::SchweizerSklar,
            lambda: 1.0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub(crate) fn kind(&self) -> GenKind {
        match self.family {
            Family::SchweizerSklar if self.lambda == 0.0 => GenKind::NegLog,
            Family::SchweizerSklar => GenKind::Power(self.lambda),
            Family::Frank if self.lambda == 1.0 => GenKind::NegLog,
            Family::Frank if self.lambda == f64::INFINITY => GenKind::Power(1.0),
            Family::Frank => GenKind::Frank(self.lambda),
        }
    }

    /// `g(0⁺)`: `+inf` for strict generators, `1/λ` for Schweizer-Sklar λ > 0.
    pub fn at_zero(&self) -> f64 {
        match self.kind() {
            GenKind::Power(l) if l > 0.0 => 1.0 / l,
            _ => f64::INFINITY,
        }
    }

    pub fn is_strict(&self) -> bool {
        self.at_zero() == f64::INFINITY
    }

    /// `g(x)` for `x ∈ [0, 1]`.
    pub fn value(&self, x: f64) -> Result<f64, TnormError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(TnormError::Domain(x));
        }
        Ok(self.eval(x))
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 0.0;
        }
        if x <= 0.0 {
            return self.at_zero();
        }
        let x = x.max(self.epsilon);
        match self.kind() {
            GenKind::NegLog => -x.ln(),
            GenKind::Power(1.0) => 1.0 - x,
            // (1 - x^λ) / λ, written to stay accurate near x = 1
            GenKind::Power(l) => -(l * x.ln()).exp_m1() / l,
            GenKind::Frank(l) => ((l - 1.0) / (l.powf(x) - 1.0)).ln(),
        }
    }

    /// Pseudo-inverse: `g⁻¹(y)` for `y ≥ 0`, with `y ≥ g(0⁺)` mapping to 0.
    pub fn pseudo_inverse(&self, y: f64) -> Result<f64, TnormError> {
        if y.is_nan() || y < 0.0 {
            return Err(TnormError::Domain(y));
        }
        Ok(self.inverse(y))
    }

    pub(crate) fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        if y >= self.at_zero() {
            return 0.0;
        }
        let x = match self.kind() {
            GenKind::NegLog => (-y).exp(),
            GenKind::Power(1.0) => 1.0 - y,
            // (1 - λy)^(1/λ)
            GenKind::Power(l) => ((-l * y).ln_1p() / l).exp(),
            // log_λ(1 + (λ - 1) e^{-y})
            GenKind::Frank(l) => ((l - 1.0) * (-y).exp()).ln_1p() / l.ln(),
        };
        x.clamp(0.0, 1.0)
    }

    /// `T(x, y) = g⁻¹(min{g(0⁺), g(x) + g(y)})`.
    pub fn tnorm(&self, x: f64, y: f64) -> f64 {
        self.tnorm_all([x, y])
    }

    /// n-ary t-norm over all values, computed with a single pseudo-inverse.
    pub fn tnorm_all(&self, xs: impl IntoIterator<Item = f64>) -> f64 {
        match self.kind() {
            GenKind::Power(l) if l != 1.0 => self.power_tnorm(l, xs.into_iter().collect()),
            _ => {
                let sum: f64 = xs.into_iter().map(|x| self.eval(x)).sum();
                self.inverse(sum.min(self.at_zero()))
            }
        }
    }

    // (1 - λ Σ g(x_i))^(1/λ) rewritten as (a^λ - λ Σ_{x_i ≠ a} g(x_i))^(1/λ)
    // with a the smallest argument; going through g(a) and back cancels
    // catastrophically when a is small.
    fn power_tnorm(&self, l: f64, xs: Vec<f64>) -> f64 {
        let Some((k, &a)) = xs.iter().enumerate().min_by(|p, q| p.1.total_cmp(q.1)) else {
            return 1.0;
        };
        if a <= 0.0 {
            return 0.0;
        }
        let rest: f64 = xs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &x)| self.eval(x))
            .sum();
        let base = a.max(self.epsilon).powf(l) - l * rest;
        if base <= 0.0 {
            return 0.0;
        }
        base.powf(1.0 / l).clamp(0.0, 1.0)
    }

    pub fn residuum(&self, x: f64, y: f64) -> f64 {
        self.inverse(sat_sub(self.eval(y), self.eval(x)).max(0.0))
    }

    pub fn biresiduum(&self, x: f64, y: f64) -> f64 {
        self.inverse(sat_sub(self.eval(x), self.eval(y)).abs())
    }

    pub fn tconorm(&self, x: f64, y: f64) -> f64 {
        1.0 - self.tnorm(1.0 - x, 1.0 - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum GenKind {
    NegLog,
    Power(f64),
    Frank(f64),
}

/// `a - b` on extended reals where `inf - inf` is taken as 0 (equal arguments).
fn sat_sub(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY && b == f64::INFINITY {
        0.0
    } else {
        a - b
    }
}

/// Closed-form t-norm of a principal semantics.
pub fn named_tnorm(kind: Principal, x: f64, y: f64) -> Result<TruthDegree, TnormError> {
    let (x, y) = (TruthDegree::new(x)?.0, TruthDegree::new(y)?.0);
    Ok(TruthDegree(table_tnorm(kind, x, y)))
}

fn table_tnorm(kind: Principal, x: f64, y: f64) -> f64 {
    match kind {
        Principal::Godel => x.min(y),
        Principal::Lukasiewicz => (x + y - 1.0).max(0.0),
        Principal::Product => x * y,
    }
}

fn table_eval(kind: Principal, conn: Connective, x: f64, y: f64) -> f64 {
    use Connective::*;
    use Principal::*;
    match (conn, kind) {
        (StrongConj, k) => table_tnorm(k, x, y),
        (WeakConj, _) => x.min(y),
        (WeakDisj, _) => x.max(y),
        (StrongNeg, _) => 1.0 - x,
        (ResidualImply, Godel) => {
            if x <= y {
                1.0
            } else {
                y
            }
        }
        (ResidualImply, Lukasiewicz) => (1.0 - x + y).min(1.0),
        (ResidualImply, Product) => {
            if x <= y {
                1.0
            } else {
                y / x
            }
        }
        (BiResiduum, Godel) => {
            if x == y {
                1.0
            } else {
                x.min(y)
            }
        }
        (BiResiduum, Lukasiewicz) => 1.0 - (x - y).abs(),
        (BiResiduum, Product) => {
            if x == y {
                1.0
            } else {
                x.min(y) / x.max(y)
            }
        }
        (ResidualNeg, Lukasiewicz) => 1.0 - x,
        (ResidualNeg, Godel | Product) => {
            if x == 0.0 {
                1.0
            } else {
                0.0
            }
        }
        (TConorm, Godel) => x.max(y),
        (TConorm, Lukasiewicz) => (x + y).min(1.0),
        (TConorm, Product) => x + y - x * y,
        (MaterialImply, Godel) => (1.0 - x).max(y),
        (MaterialImply, Lukasiewicz) => (1.0 - x + y).min(1.0),
        (MaterialImply, Product) => 1.0 - x + x * y,
    }
}

fn generator_eval(g: &Generator, conn: Connective, x: f64, y: f64) -> f64 {
    use Connective::*;
    match conn {
        StrongConj => g.tnorm(x, y),
        TConorm => g.tconorm(x, y),
        WeakConj => x.min(y),
        WeakDisj => x.max(y),
        ResidualImply => g.residuum(x, y),
        BiResiduum => g.biresiduum(x, y),
        ResidualNeg => g.residuum(x, 0.0),
        StrongNeg => 1.0 - x,
        MaterialImply => g.tconorm(1.0 - x, y),
    }
}

impl Semantics {
    pub fn product() -> Self {
        Semantics::Table(Principal::Product)
    }

    pub fn lukasiewicz() -> Self {
        Semantics::Table(Principal::Lukasiewicz)
    }

    pub fn godel() -> Self {
        Semantics::Table(Principal::Godel)
    }

    /// Schweizer-Sklar or Frank generator semantics. Frank λ = 0 resolves to
    /// the Gödel table since it has no generator.
    pub fn family(family: Family, lambda: f64) -> Result<Self, TnormError> {
        match family {
            Family::SchweizerSklar => Ok(Semantics::Generator(Generator::schweizer_sklar(lambda)?)),
            Family::Frank if lambda == 0.0 => Ok(Semantics::Table(Principal::Godel)),
            Family::Frank => Ok(Semantics::Generator(Generator::frank(lambda)?)),
        }
    }

    /// The additive generator behind this semantics, if it has one.
    pub fn generator(&self) -> Result<Generator, TnormError> {
        match self {
            Semantics::Generator(g) => Ok(*g),
            Semantics::Table(Principal::Product) => Ok(Generator::product()),
            Semantics::Table(Principal::Lukasiewicz) => Ok(Generator::lukasiewicz()),
            Semantics::Table(Principal::Godel) => Err(TnormError::Unsupported(
                "the Gödel t-norm is not Archimedean and has no additive generator".into(),
            )),
        }
    }

    pub fn eval_connective(
        &self,
        conn: Connective,
        x: TruthDegree,
        y: Option<TruthDegree>,
    ) -> Result<TruthDegree, TnormError> {
        let arity_err = || TnormError::Arity {
            connective: conn,
            expected: conn.arity(),
        };
        let y = match (conn.arity(), y) {
            (1, None) => 0.0,
            (2, Some(y)) => y.0,
            _ => return Err(arity_err()),
        };
        Ok(TruthDegree::clamped(self.eval_raw(conn, x.0, y)))
    }

    /// Connective evaluation on raw values already known to lie in `[0, 1]`.
    pub(crate) fn eval_raw(&self, conn: Connective, x: f64, y: f64) -> f64 {
        match self {
            Semantics::Table(k) => table_eval(*k, conn, x, y),
            Semantics::Generator(g) => generator_eval(g, conn, x, y),
        }
    }

    /// n-ary strong conjunction.
    pub(crate) fn tnorm_all(&self, xs: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Semantics::Table(k) => xs.into_iter().fold(1.0, |acc, x| table_tnorm(*k, acc, x)),
            Semantics::Generator(g) => g.tnorm_all(xs),
        }
    }

    pub fn tnorm(&self, x: f64, y: f64) -> f64 {
        self.tnorm_all([x, y])
    }
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Semantics::Table(Principal::Godel) => f.write_str("godel"),
            Semantics::Table(Principal::Lukasiewicz) => f.write_str("lukasiewicz"),
            Semantics::Table(Principal::Product) => f.write_str("product"),
            Semantics::Generator(g) => match g.family {
                Family::SchweizerSklar => write!(f, "ss(λ={})", g.lambda),
                Family::Frank => write!(f, "frank(λ={})", g.lambda),
            },
        }
    }
}
