#![allow(dead_code)]

use logicloss::compiler::SampleOutputs;
use logicloss::fol::{BinaryOp, Formula, UnaryOp};
use logicloss::tnorm::{Family, Semantics};
use rand::Rng;

pub const TASKS: [&str; 3] = ["queryObj", "verifyAttr", "chooseRel"];

pub fn task_names() -> Vec<String> {
    TASKS.iter().map(|s| s.to_string()).collect()
}

/// Every semantics with an additive generator, labelled.
pub fn generator_settings() -> Vec<(String, Semantics)> {
    let mut out = vec![
        ("product".to_string(), Semantics::product()),
        ("lukasiewicz".to_string(), Semantics::lukasiewicz()),
    ];
    for l in [-1.0, 0.5, 2.0] {
        out.push((format!("ss({l})"), Semantics::family(Family::SchweizerSklar, l).unwrap()));
    }
    for l in [2.0, f64::INFINITY] {
        out.push((format!("frank({l})"), Semantics::family(Family::Frank, l).unwrap()));
    }
    out
}

/// A probability vector of length `n` whose entry `gold` lies in `[lo, 1]`.
pub fn distribution(rng: &mut impl Rng, n: usize, gold: usize, lo: f64) -> Vec<f64> {
    let pg = if n == 1 { 1.0 } else { rng.random_range(lo..1.0) };
    let rest: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = rest.iter().sum();
    let mut it = rest.into_iter();
    (0..n)
        .map(|i| {
            if i == gold {
                pg
            } else {
                it.next().unwrap() / total * (1.0 - pg)
            }
        })
        .collect()
}

/// Random outputs over `n_answers` answers and `n_tasks` tasks; every gold
/// probability is at least `lo`.
pub fn sample(rng: &mut impl Rng, n_answers: usize, n_tasks: usize, lo: f64) -> SampleOutputs {
    let ga = rng.random_range(0..n_answers);
    let gt = rng.random_range(0..n_tasks);
    SampleOutputs::new(
        distribution(rng, n_answers, ga, lo),
        task_distribution(rng, n_tasks),
        ga,
        gt,
    )
    .unwrap()
}

fn task_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

const VARS: [&str; 3] = ["x", "y", "z"];

/// A closed formula over the connectives that compile to generator space.
/// Residual negation only appears when `allow_neg`.
pub fn random_formula(rng: &mut impl Rng, max_depth: usize, allow_neg: bool) -> Formula {
    let q = if rng.random_bool(0.5) {
        Formula::forall
    } else {
        Formula::exists
    };
    q(VARS[0], body(rng, max_depth, 1, allow_neg))
}

fn body(rng: &mut impl Rng, depth: usize, bound: usize, allow_neg: bool) -> Formula {
    let var = |rng: &mut dyn rand::RngCore| VARS[rng.random_range(0..bound)];
    if depth <= 1 {
        return match rng.random_range(0..5) {
            0 | 1 => Formula::task(TASKS[rng.random_range(0..TASKS.len())], var(rng)),
            2 | 3 => Formula::ans(var(rng)),
            _ => Formula::constant([0.25, 0.5, 0.75, 1.0][rng.random_range(0..4)]),
        };
    }
    match rng.random_range(0..10) {
        0 if bound < VARS.len() => {
            let v = VARS[bound];
            let inner = body(rng, depth - 1, bound + 1, allow_neg);
            if rng.random_bool(0.5) {
                Formula::forall(v, inner)
            } else {
                Formula::exists(v, inner)
            }
        }
        1 if allow_neg => Formula::unary(UnaryOp::ResidualNeg, body(rng, depth - 1, bound, allow_neg)),
        _ => {
            let op = [
                BinaryOp::StrongConj,
                BinaryOp::WeakConj,
                BinaryOp::WeakDisj,
                BinaryOp::ResidualImply,
                BinaryOp::BiResiduum,
            ][rng.random_range(0..5)];
            Formula::binary(
                op,
                body(rng, depth - 1, bound, allow_neg),
                body(rng, depth - 1, bound, allow_neg),
            )
        }
    }
}
