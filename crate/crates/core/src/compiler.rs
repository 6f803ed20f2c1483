//! Truth-degree evaluation of formulae over classifier outputs, and their
//! compilation into differentiable losses in generator space.
//!
//! A compiled loss is `g(truth)` built directly from `g` of the atoms: the
//! t-norm becomes a sum, weak conjunction a max, weak disjunction a min,
//! residuation a clamped difference and the bi-residuum an absolute
//! difference. No pseudo-inverse appears in the resulting expression.
//!
//! Compiled inputs are named `s<i>.ans` for the gold-answer probability of
//! sample `i` and `s<i>.task.<name>` for its probability of a task. They are
//! expected in `(0, 1]`; callers apply the numerical floor before binding.

use std::collections::HashMap;

use serde::Serialize;

use crate::autodiff::{AutodiffError, Expr, Graph, NodeId};
use crate::entailment::{EntailmentKb, KbError, RuleConnective};
use crate::fol::{Atom, BinaryOp, Formula, Quantifier, UnaryOp};
use crate::tnorm::{Connective, GenKind, Generator, Semantics, TnormError, TruthDegree};

const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unsupported connective: {0}")]
    UnsupportedConnective(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{what} index {index} out of range for length {len}")]
    Index { what: &'static str, index: usize, len: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("`exists` over an empty domain")]
    EmptyDomain,
    #[error("beta must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error(transparent)]
    Tnorm(#[from] TnormError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Normalized classifier outputs for one question together with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutputs {
    pub answer_probs: Vec<f64>,
    pub task_probs: Vec<f64>,
    pub gold_answer: usize,
    pub gold_task: usize,
}

impl SampleOutputs {
    pub fn new(
        answer_probs: Vec<f64>,
        task_probs: Vec<f64>,
        gold_answer: usize,
        gold_task: usize,
    ) -> Result<Self, CompileError> {
        let s = SampleOutputs {
            answer_probs,
            task_probs,
            gold_answer,
            gold_task,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        check_distribution("answer", &self.answer_probs)?;
        check_distribution("task", &self.task_probs)?;
        check_index("gold answer", self.gold_answer, self.answer_probs.len())?;
        check_index("gold task", self.gold_task, self.task_probs.len())
    }

    pub fn gold_answer_prob(&self) -> f64 {
        self.answer_probs[self.gold_answer]
    }

    pub fn gold_task_prob(&self) -> f64 {
        self.task_probs[self.gold_task]
    }
}

fn check_distribution(what: &str, p: &[f64]) -> Result<(), CompileError> {
    if p.is_empty() {
        return Err(CompileError::InvalidSample(format!("empty {what} distribution")));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CompileError::InvalidSample(format!("{what} probability {v} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(CompileError::InvalidSample(format!("{what} probabilities sum to {sum}")));
    }
    Ok(())
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<(), CompileError> {
    if index < len {
        Ok(())
    } else {
        Err(CompileError::Index { what, index, len })
    }
}

/// The two samples a pairwise rule is applied to.
#[derive(Debug, Clone, Copy)]
pub struct PairBinding<'a> {
    pub x1: &'a SampleOutputs,
    pub x2: &'a SampleOutputs,
}

/// Which probability feeds a compiled input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputRef {
    /// Gold-answer probability of a sample.
    Answer { sample: usize },
    /// Probability of task `index` (named `task`) for a sample.
    Task { sample: usize, index: usize, task: String },
}

impl InputRef {
    pub fn name(&self) -> String {
        match self {
            InputRef::Answer { sample } => format!("s{sample}.ans"),
            InputRef::Task { sample, task, .. } => format!("s{sample}.task.{task}"),
        }
    }

    pub fn sample(&self) -> usize {
        match self {
            InputRef::Answer { sample } | InputRef::Task { sample, .. } => *sample,
        }
    }

    fn read(&self, samples: &[SampleOutputs]) -> Result<f64, CompileError> {
        let s = samples.get(self.sample()).ok_or(CompileError::Index {
            what: "sample",
            index: self.sample(),
            len: samples.len(),
        })?;
        match self {
            InputRef::Answer { .. } => {
                check_index("gold answer", s.gold_answer, s.answer_probs.len())?;
                Ok(s.gold_answer_prob())
            }
            InputRef::Task { index, .. } => {
                check_index("task", *index, s.task_probs.len())?;
                Ok(s.task_probs[*index])
            }
        }
    }
}

/// A loss expression in generator space plus the meaning of each input slot.
#[derive(Debug, Clone)]
pub struct CompiledLoss {
    pub expr: Expr,
    /// One entry per input slot of `expr`, in slot order.
    pub schema: Vec<InputRef>,
    pub generator: Generator,
}

impl CompiledLoss {
    /// Input values for `samples` in slot order.
    pub fn bind(&self, samples: &[SampleOutputs]) -> Result<Vec<f64>, CompileError> {
        self.schema.iter().map(|r| r.read(samples)).collect()
    }

    pub fn eval(&self, samples: &[SampleOutputs]) -> Result<f64, CompileError> {
        Ok(self.expr.eval_slots(&self.bind(samples)?)?)
    }

    /// Value and gradient with respect to each schema entry.
    pub fn value_and_grad(&self, samples: &[SampleOutputs]) -> Result<(f64, Vec<f64>), CompileError> {
        Ok(self.expr.value_and_grad_slots(&self.bind(samples)?)?)
    }

    pub fn to_prefix(&self) -> String {
        self.expr.to_prefix()
    }
}

/// Loss value with its three components; `value = beta * logic + answer + task`.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub value: f64,
    pub logic: f64,
    pub answer: f64,
    pub task: f64,
    pub compiled: CompiledLoss,
}

fn generator_of(sem: &Semantics) -> Result<Generator, CompileError> {
    sem.generator().map_err(|e| match e {
        TnormError::Unsupported(msg) => CompileError::UnsupportedConnective(msg),
        other => other.into(),
    })
}

fn task_lookup(tasks: &[String]) -> HashMap<&str, usize> {
    tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect()
}

/// Truth degree of a closed formula with quantifiers ranging over `samples`.
pub fn truth_degree(
    f: &Formula,
    samples: &[SampleOutputs],
    tasks: &[String],
    sem: &Semantics,
) -> Result<TruthDegree, CompileError> {
    truth_degree_bound(f, samples, tasks, sem, &[])
}

/// As [`truth_degree`], with free variables bound to sample indices.
pub fn truth_degree_bound(
    f: &Formula,
    samples: &[SampleOutputs],
    tasks: &[String],
    sem: &Semantics,
    bindings: &[(&str, usize)],
) -> Result<TruthDegree, CompileError> {
    for &(_, i) in bindings {
        check_index("sample", i, samples.len())?;
    }
    let eval = Evaluator {
        samples,
        tasks: task_lookup(tasks),
        sem,
    };
    let mut env: Vec<(&str, usize)> = bindings.to_vec();
    Ok(TruthDegree::new(eval.truth(f, &mut env)?.clamp(0.0, 1.0))?)
}

struct Evaluator<'a> {
    samples: &'a [SampleOutputs],
    tasks: HashMap<&'a str, usize>,
    sem: &'a Semantics,
}

fn lookup(env: &[(&str, usize)], var: &str) -> Result<usize, CompileError> {
    env.iter()
        .rev()
        .find(|(v, _)| *v == var)
        .map(|&(_, i)| i)
        .ok_or_else(|| CompileError::UnboundVariable(var.to_string()))
}

impl<'a> Evaluator<'a> {
    fn truth<'f>(&self, f: &'f Formula, env: &mut Vec<(&'f str, usize)>) -> Result<f64, CompileError> {
        match f {
            Formula::Atom(Atom::Const(c)) => Ok(*c),
            Formula::Atom(Atom::AnswerMatch { var }) => {
                let s = &self.samples[lookup(env, var)?];
                check_index("gold answer", s.gold_answer, s.answer_probs.len())?;
                Ok(s.gold_answer_prob())
            }
            Formula::Atom(Atom::Task { task, var }) => {
                let s = &self.samples[lookup(env, var)?];
                let t = *self.tasks.get(task.as_str()).ok_or_else(|| CompileError::UnknownTask(task.clone()))?;
                check_index("task", t, s.task_probs.len())?;
                Ok(s.task_probs[t])
            }
            Formula::Unary(op, a) => {
                let x = self.truth(a, env)?;
                Ok(self.sem.eval_raw(Connective::from(*op), x, 0.0).clamp(0.0, 1.0))
            }
            Formula::Binary(op, a, b) => {
                let x = self.truth(a, env)?;
                let y = self.truth(b, env)?;
                Ok(self.sem.eval_raw(Connective::from(*op), x, y).clamp(0.0, 1.0))
            }
            Formula::Quant(q, var, body) => {
                let mut values = Vec::with_capacity(self.samples.len());
                for i in 0..self.samples.len() {
                    env.push((var, i));
                    let v = self.truth(body, env);
                    env.pop();
                    values.push(v?);
                }
                match q {
                    Quantifier::ForAll => Ok(self.sem.tnorm_all(values).clamp(0.0, 1.0)),
                    Quantifier::Exists => values
                        .into_iter()
                        .reduce(f64::max)
                        .ok_or(CompileError::EmptyDomain),
                }
            }
        }
    }
}

/// Builds generator-space expressions, sharing `g(p)` nodes per input.
struct Builder<'a> {
    graph: Graph,
    gen: Generator,
    tasks: &'a [String],
    schema: Vec<InputRef>,
    g_cache: HashMap<NodeId, NodeId>,
}

impl<'a> Builder<'a> {
    fn new(gen: Generator, tasks: &'a [String]) -> Self {
        Builder {
            graph: Graph::new(),
            gen,
            tasks,
            schema: Vec::new(),
            g_cache: HashMap::new(),
        }
    }

    fn input(&mut self, r: InputRef) -> NodeId {
        let name = r.name();
        if self.graph.input_slot(&name).is_none() {
            self.schema.push(r);
        }
        self.graph.input(&name)
    }

    fn answer(&mut self, sample: usize) -> NodeId {
        self.input(InputRef::Answer { sample })
    }

    fn task(&mut self, sample: usize, index: usize) -> NodeId {
        let task = self.tasks[index].clone();
        self.input(InputRef::Task { sample, index, task })
    }

    /// `g(p)` for a probability node.
    fn g(&mut self, p: NodeId) -> NodeId {
        if let Some(&n) = self.g_cache.get(&p) {
            return n;
        }
        let gr = &mut self.graph;
        let n = match self.gen.kind() {
            GenKind::NegLog => {
                let l = gr.log(p);
                gr.neg(l)
            }
            GenKind::Power(1.0) => {
                let one = gr.constant(1.0);
                gr.sub(one, p)
            }
            GenKind::Power(l) => {
                let one = gr.constant(1.0);
                let pw = gr.pow(p, l);
                let d = gr.sub(one, pw);
                let c = gr.constant(l);
                gr.div(d, c)
            }
            GenKind::Frank(l) => {
                // ln((λ - 1) / (λ^p - 1))
                let ln_l = gr.constant(l.ln());
                let e = gr.mul(p, ln_l);
                let pw = gr.exp(e);
                let one = gr.constant(1.0);
                let den = gr.sub(pw, one);
                let num = gr.constant(l - 1.0);
                let q = gr.div(num, den);
                gr.log(q)
            }
        };
        self.g_cache.insert(p, n);
        n
    }

    /// `min{g(0⁺), s}`; a no-op for strict generators.
    fn clamp_top(&mut self, s: NodeId) -> NodeId {
        let top = self.gen.at_zero();
        if top.is_finite() {
            let c = self.graph.constant(top);
            self.graph.min(s, c)
        } else {
            s
        }
    }

    fn unsupported(&self, what: &str) -> CompileError {
        CompileError::UnsupportedConnective(format!("{what} cannot be compiled in generator space"))
    }

    fn lower<'f>(
        &mut self,
        f: &'f Formula,
        n_samples: usize,
        lookup_task: &HashMap<&str, usize>,
        env: &mut Vec<(&'f str, usize)>,
    ) -> Result<NodeId, CompileError> {
        match f {
            Formula::Atom(Atom::Const(c)) => {
                let v = self.gen.value(*c)?;
                if !v.is_finite() {
                    return Err(CompileError::UnsupportedConnective(format!(
                        "constant {c} has an infinite generator value under a strict generator"
                    )));
                }
                Ok(self.graph.constant(v))
            }
            Formula::Atom(Atom::AnswerMatch { var }) => {
                let i = lookup(env, var)?;
                let p = self.answer(i);
                Ok(self.g(p))
            }
            Formula::Atom(Atom::Task { task, var }) => {
                let i = lookup(env, var)?;
                let t = *lookup_task.get(task.as_str()).ok_or_else(|| CompileError::UnknownTask(task.clone()))?;
                let p = self.task(i, t);
                Ok(self.g(p))
            }
            Formula::Unary(UnaryOp::ResidualNeg, a) => {
                if self.gen.is_strict() {
                    return Err(self.unsupported("residual negation under a strict generator"));
                }
                // x => 0: max{0, g(0⁺) - g(x)}
                let ga = self.lower(a, n_samples, lookup_task, env)?;
                let top = self.graph.constant(self.gen.at_zero());
                let d = self.graph.sub(top, ga);
                Ok(self.graph.clamp_lower(d))
            }
            Formula::Unary(UnaryOp::StrongNeg, _) => Err(self.unsupported("strong negation")),
            Formula::Binary(op, a, b) => {
                if matches!(op, BinaryOp::TConorm | BinaryOp::MaterialImply) {
                    return Err(self.unsupported(op.token()));
                }
                let ga = self.lower(a, n_samples, lookup_task, env)?;
                let gb = self.lower(b, n_samples, lookup_task, env)?;
                let gr = &mut self.graph;
                Ok(match op {
                    BinaryOp::StrongConj => {
                        let s = gr.add(ga, gb);
                        self.clamp_top(s)
                    }
                    BinaryOp::WeakConj => gr.max(ga, gb),
                    BinaryOp::WeakDisj => gr.min(ga, gb),
                    BinaryOp::ResidualImply => {
                        let d = gr.sub(gb, ga);
                        gr.clamp_lower(d)
                    }
                    BinaryOp::BiResiduum => {
                        let d = gr.sub(ga, gb);
                        gr.abs(d)
                    }
                    BinaryOp::TConorm | BinaryOp::MaterialImply => unreachable!(),
                })
            }
            Formula::Quant(q, var, body) => {
                let mut terms = Vec::with_capacity(n_samples);
                for i in 0..n_samples {
                    env.push((var, i));
                    let t = self.lower(body, n_samples, lookup_task, env);
                    env.pop();
                    terms.push(t?);
                }
                match q {
                    Quantifier::ForAll => {
                        let s = self.graph.sum(&terms);
                        Ok(self.clamp_top(s))
                    }
                    Quantifier::Exists => self.graph.min_all(&terms).ok_or(CompileError::EmptyDomain),
                }
            }
        }
    }

    /// `g` of the consistency formula for the ordered pair `(i, j)`.
    fn pair_term(&mut self, samples: &[SampleOutputs], i: usize, j: usize, kb: &EntailmentKb, with_tasks: bool) -> Result<NodeId, CompileError> {
        if kb.rules().is_empty() {
            return Err(KbError::Empty.into());
        }
        let pa_i = self.answer(i);
        let pa_j = self.answer(j);
        let (ga_i, ga_j) = (self.g(pa_i), self.g(pa_j));
        let cons = self.graph.add(ga_i, ga_j);
        let cons = self.clamp_top(cons);

        // g(max_k R_k) = min_k g(R_k)
        let mut rule_terms = Vec::with_capacity(kb.rules().len());
        for rule in kb.rules() {
            let x = self.task(i, rule.src);
            let y = self.task(j, rule.dst);
            let (gx, gy) = (self.g(x), self.g(y));
            let d = self.graph.sub(gy, gx);
            rule_terms.push(match rule.connective {
                RuleConnective::Imply => self.graph.clamp_lower(d),
                RuleConnective::Iff => self.graph.abs(d),
            });
        }
        let mut ante = self.graph.min_all(&rule_terms).expect("non-empty rule set");
        if with_tasks {
            let pt_i = self.task(i, samples[i].gold_task);
            let pt_j = self.task(j, samples[j].gold_task);
            let (gt_i, gt_j) = (self.g(pt_i), self.g(pt_j));
            let s = self.graph.sum(&[ante, gt_i, gt_j]);
            ante = s;
        }
        let ante = self.clamp_top(ante);
        let d = self.graph.sub(cons, ante);
        Ok(self.graph.clamp_lower(d))
    }

    fn finish(self, root: NodeId) -> CompiledLoss {
        CompiledLoss {
            expr: Expr::new(self.graph, root),
            schema: self.schema,
            generator: self.gen,
        }
    }
}

/// Compile `f` into `g(truth(f))` with quantifiers ranging over `n_samples`
/// samples. Only weak and strong conjunction, weak disjunction, residual
/// implication and negation, and the bi-residuum are accepted.
pub fn compile(f: &Formula, sem: &Semantics, n_samples: usize, tasks: &[String]) -> Result<CompiledLoss, CompileError> {
    let gen = generator_of(sem)?;
    let lookup_task = task_lookup(tasks);
    let mut b = Builder::new(gen, tasks);
    let mut env = Vec::new();
    let root = b.lower(f, n_samples, &lookup_task, &mut env)?;
    Ok(b.finish(root))
}

/// `Σ g(p_gold)` over the samples, for answers or for tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    Answer,
    Task,
}

pub fn supervised_loss(outputs: &[SampleOutputs], which: Supervision, sem: &Semantics) -> Result<f64, CompileError> {
    let gen = generator_of(sem)?;
    let mut total = 0.0;
    for s in outputs {
        let p = match which {
            Supervision::Answer => {
                check_index("gold answer", s.gold_answer, s.answer_probs.len())?;
                s.gold_answer_prob()
            }
            Supervision::Task => {
                check_index("gold task", s.gold_task, s.task_probs.len())?;
                s.gold_task_prob()
            }
        };
        total += gen.value(p)?;
    }
    Ok(total)
}

/// `max{0, g(pa1) + g(pa2) - g(max_k R_k) - [g(pt1) + g(pt2)]}` with each side
/// clamped at `g(0⁺)`. `pt` is `None` when task antecedents are left out.
pub fn consistency_term(gen: &Generator, pa: (f64, f64), max_relation: f64, pt: Option<(f64, f64)>) -> f64 {
    let top = gen.at_zero();
    let cons = (gen.eval(pa.0) + gen.eval(pa.1)).min(top);
    let mut ante = gen.eval(max_relation);
    if let Some((t1, t2)) = pt {
        ante += gen.eval(t1) + gen.eval(t2);
    }
    let ante = ante.min(top);
    if cons == f64::INFINITY && ante == f64::INFINITY {
        return 0.0;
    }
    (cons - ante).max(0.0)
}

/// Consistency loss of one ordered pair under the rules of `kb`.
pub fn pair_consistency_loss(
    b: &PairBinding<'_>,
    kb: &EntailmentKb,
    sem: &Semantics,
    include_task_antecedent: bool,
) -> Result<f64, CompileError> {
    let gen = generator_of(sem)?;
    let samples = [b.x1.clone(), b.x2.clone()];
    for s in &samples {
        s.validate()?;
        check_task_len(s, kb)?;
    }
    let tasks = kb.task_names();
    let mut builder = Builder::new(gen, &tasks);
    let root = builder.pair_term(&samples, 0, 1, kb, include_task_antecedent)?;
    builder.finish(root).eval(&samples)
}

fn check_task_len(s: &SampleOutputs, kb: &EntailmentKb) -> Result<(), CompileError> {
    if s.task_probs.len() != kb.tasks().len() {
        return Err(KbError::DistributionLength {
            expected: kb.tasks().len(),
            got: s.task_probs.len(),
        }
        .into());
    }
    Ok(())
}

/// Ordered pairs of distinct members of each family.
pub fn family_pairs(families: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for fam in families {
        for &i in fam {
            for &j in fam {
                if i != j {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// `beta * Σ_pairs L_pair + Σ g(p_gold answer) + Σ g(p_gold task)` as one
/// differentiable expression.
pub fn total_loss(
    batch: &[SampleOutputs],
    pairs: &[(usize, usize)],
    kb: &EntailmentKb,
    sem: &Semantics,
    beta: f64,
    include_task_antecedent: bool,
) -> Result<TotalLoss, CompileError> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(CompileError::InvalidBeta(beta));
    }
    let weights = LossWeights {
        logic: beta,
        answer: 1.0,
        task: 1.0,
    };
    weighted_loss(batch, pairs, kb, sem, weights, include_task_antecedent)
}

/// Weights of the three loss terms. All three components are always
/// evaluated; a zero weight only removes the term from the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub logic: f64,
    pub answer: f64,
    pub task: f64,
}

/// `logic * Σ_pairs L_pair + answer * L_ans + task * L_tsk`.
pub fn weighted_loss(
    batch: &[SampleOutputs],
    pairs: &[(usize, usize)],
    kb: &EntailmentKb,
    sem: &Semantics,
    weights: LossWeights,
    include_task_antecedent: bool,
) -> Result<TotalLoss, CompileError> {
    for w in [weights.logic, weights.answer, weights.task] {
        if !w.is_finite() || w < 0.0 {
            return Err(CompileError::InvalidBeta(w));
        }
    }
    let gen = generator_of(sem)?;
    for s in batch {
        s.validate()?;
        check_task_len(s, kb)?;
    }
    for &(i, j) in pairs {
        check_index("sample", i, batch.len())?;
        check_index("sample", j, batch.len())?;
    }
    let tasks = kb.task_names();
    let mut b = Builder::new(gen, &tasks);

    let mut pair_terms = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        pair_terms.push(b.pair_term(batch, i, j, kb, include_task_antecedent)?);
    }
    let logic = b.graph.sum(&pair_terms);
    let mut ans_terms = Vec::with_capacity(batch.len());
    let mut tsk_terms = Vec::with_capacity(batch.len());
    for (i, s) in batch.iter().enumerate() {
        let pa = b.answer(i);
        ans_terms.push(b.g(pa));
        let pt = b.task(i, s.gold_task);
        tsk_terms.push(b.g(pt));
    }
    let answer = b.graph.sum(&ans_terms);
    let task = b.graph.sum(&tsk_terms);
    let scaled = |node: NodeId, w: f64, b: &mut Builder| {
        if w == 1.0 {
            node
        } else {
            let c = b.graph.constant(w);
            b.graph.mul(c, node)
        }
    };
    let terms = [
        scaled(logic, weights.logic, &mut b),
        scaled(answer, weights.answer, &mut b),
        scaled(task, weights.task, &mut b),
    ];
    let root = b.graph.sum(&terms);

    let compiled = b.finish(root);
    let slots = compiled.bind(batch)?;
    let vals = compiled.expr.graph.forward(root, &slots)?;
    Ok(TotalLoss {
        value: vals[root.index()],
        logic: vals[logic.index()],
        answer: vals[answer.index()],
        task: vals[task.index()],
        compiled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::parse_formula;

    // -2 ln 0.5 + ln 0.8 + 2 ln 0.9, evaluated independently
    const PAIR_ORACLE: f64 = 0.9524297784900283;

    fn sample(answer: &[f64], task: &[f64]) -> SampleOutputs {
        SampleOutputs::new(answer.to_vec(), task.to_vec(), 0, 0).unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn truth_degree_examples() {
        let tasks = names(&["queryObj", "queryAttrObj"]);
        let f = parse_formula("forall x: ans(x)", &tasks).unwrap();
        let perfect = [sample(&[1.0, 0.0], &[1.0, 0.0])];
        assert_eq!(truth_degree(&f, &perfect, &tasks, &Semantics::product()).unwrap().value(), 1.0);

        let half = [sample(&[0.5, 0.5], &[1.0, 0.0]), sample(&[0.5, 0.5], &[1.0, 0.0])];
        let t = truth_degree(&f, &half, &tasks, &Semantics::product()).unwrap();
        assert!((t.value() - 0.25).abs() < 1e-12);

        let imp = Formula::binary(
            BinaryOp::ResidualImply,
            Formula::task("queryObj", "x1"),
            Formula::task("queryAttrObj", "x2"),
        );
        let pair = [sample(&[1.0], &[0.9, 0.1]), sample(&[1.0], &[0.4, 0.6])];
        let t = truth_degree_bound(&imp, &pair, &tasks, &Semantics::product(), &[("x1", 0), ("x2", 1)]).unwrap();
        assert!((t.value() - 0.6 / 0.9).abs() < 1e-12);
        assert!((t.value() - 0.6667).abs() < 1e-4);

        assert_eq!(
            truth_degree(&imp, &pair, &tasks, &Semantics::product()),
            Err(CompileError::UnboundVariable("x1".into()))
        );
    }

    #[test]
    fn compiled_answer_losses() {
        let tasks = names(&["t"]);
        let f = parse_formula("forall x: ans(x)", &tasks).unwrap();
        let samples = [sample(&[0.9, 0.1], &[1.0]), sample(&[0.8, 0.2], &[1.0])];
        let ce = compile(&f, &Semantics::product(), 2, &tasks).unwrap();
        assert!((ce.eval(&samples).unwrap() - (-(0.9f64.ln()) - 0.8f64.ln())).abs() < 1e-12);
        assert_eq!(ce.to_prefix(), "(+ (neg (log s0.ans)) (neg (log s1.ans)))");
        let l1 = compile(&f, &Semantics::lukasiewicz(), 2, &tasks).unwrap();
        assert!((l1.eval(&samples).unwrap() - 0.3).abs() < 1e-12);
        let ones = [sample(&[1.0, 0.0], &[1.0]), sample(&[1.0, 0.0], &[1.0])];
        assert_eq!(ce.eval(&ones).unwrap(), 0.0);
        assert_eq!(l1.eval(&ones).unwrap(), 0.0);
    }

    #[test]
    fn compile_rejects_outside_connectives() {
        let tasks = names(&["t"]);
        for text in ["forall x: ans(x) (+) t(x)", "forall x: ans(x) -> t(x)", "forall x: !ans(x)"] {
            let f = parse_formula(text, &tasks).unwrap();
            assert!(matches!(
                compile(&f, &Semantics::product(), 1, &tasks),
                Err(CompileError::UnsupportedConnective(_))
            ));
        }
        let f = parse_formula("forall x: ans(x)", &tasks).unwrap();
        assert!(matches!(
            compile(&f, &Semantics::godel(), 1, &tasks),
            Err(CompileError::UnsupportedConnective(_))
        ));
        let neg = parse_formula("forall x: ~ans(x)", &tasks).unwrap();
        assert!(compile(&neg, &Semantics::product(), 1, &tasks).is_err());
        assert!(compile(&neg, &Semantics::lukasiewicz(), 1, &tasks).is_ok());
    }

    #[test]
    fn supervised_examples() {
        let s = [sample(&[0.5, 0.5], &[1.0])];
        let v = supervised_loss(&s, Supervision::Answer, &Semantics::product()).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-6);
        let s = [sample(&[0.9, 0.1], &[1.0]), sample(&[0.8, 0.2], &[1.0])];
        let v = supervised_loss(&s, Supervision::Answer, &Semantics::lukasiewicz()).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        assert_eq!(supervised_loss(&s, Supervision::Task, &Semantics::product()).unwrap(), 0.0);
        let bad = SampleOutputs {
            answer_probs: vec![1.0],
            task_probs: vec![1.0],
            gold_answer: 3,
            gold_task: 0,
        };
        assert!(matches!(
            supervised_loss(&[bad], Supervision::Answer, &Semantics::product()),
            Err(CompileError::Index { .. })
        ));
    }

    #[test]
    fn consistency_term_oracle() {
        let g = Generator::product();
        let v = consistency_term(&g, (0.5, 0.5), 0.8, Some((0.9, 0.9)));
        assert!((v - PAIR_ORACLE).abs() < 1e-6);
        assert_eq!(consistency_term(&g, (0.9, 0.9), 0.2, Some((0.3, 0.3))), 0.0);
        assert_eq!(consistency_term(&g, (1.0, 1.0), 1.0, Some((1.0, 1.0))), 0.0);
        let without = consistency_term(&g, (0.5, 0.5), 0.8, None);
        assert!((without - (2.0 * 2f64.ln() + 0.8f64.ln())).abs() < 1e-12);
    }

    fn tiny_kb() -> EntailmentKb {
        EntailmentKb::from_texts(
            r#"{"version": 1, "tasks": ["a", "b", "c"]}"#,
            "rule \"c=>b\": forall x1 forall x2: c(x1) => b(x2)\n",
        )
        .unwrap()
    }

    #[test]
    fn pair_loss_matches_oracle_end_to_end() {
        let kb = tiny_kb();
        // R = p1(c) => p2(b) = 0.08 / 0.1 = 0.8; gold tasks at 0.9
        let x1 = sample(&[0.5, 0.5], &[0.9, 0.0, 0.1]);
        let x2 = sample(&[0.5, 0.5], &[0.9, 0.08, 0.02]);
        let b = PairBinding { x1: &x1, x2: &x2 };
        let v = pair_consistency_loss(&b, &kb, &Semantics::product(), true).unwrap();
        assert!((v - PAIR_ORACLE).abs() < 1e-6);
        let v = pair_consistency_loss(&b, &kb, &Semantics::product(), false).unwrap();
        assert!((v - consistency_term(&Generator::product(), (0.5, 0.5), 0.8, None)).abs() < 1e-12);
        assert!(matches!(
            pair_consistency_loss(&b, &kb, &Semantics::godel(), true),
            Err(CompileError::UnsupportedConnective(_))
        ));
    }

    #[test]
    fn total_loss_is_additive() {
        let kb = tiny_kb();
        let batch = [
            sample(&[0.5, 0.5], &[0.9, 0.0, 0.1]),
            sample(&[0.5, 0.5], &[0.9, 0.08, 0.02]),
        ];
        let pair = pair_consistency_loss(&PairBinding { x1: &batch[0], x2: &batch[1] }, &kb, &Semantics::product(), true).unwrap();
        let ans = supervised_loss(&batch, Supervision::Answer, &Semantics::product()).unwrap();
        let tsk = supervised_loss(&batch, Supervision::Task, &Semantics::product()).unwrap();

        let t = total_loss(&batch, &[(0, 1)], &kb, &Semantics::product(), 1.0, true).unwrap();
        assert!((t.value - (pair + ans + tsk)).abs() < 1e-9);
        assert!((t.logic - pair).abs() < 1e-12);

        let zero = total_loss(&batch, &[(0, 1)], &kb, &Semantics::product(), 0.0, true).unwrap();
        assert_eq!(zero.value, ans + tsk);
        let none = total_loss(&batch, &[], &kb, &Semantics::product(), 1.0, true).unwrap();
        assert_eq!(none.logic, 0.0);
        assert!(matches!(
            total_loss(&batch, &[], &kb, &Semantics::product(), -1.0, true),
            Err(CompileError::InvalidBeta(_))
        ));
        assert!(matches!(
            total_loss(&batch, &[(0, 2)], &kb, &Semantics::product(), 1.0, true),
            Err(CompileError::Index { .. })
        ));
    }

    #[test]
    fn family_pairs_are_ordered_and_distinct() {
        let p = family_pairs(&[vec![0, 1, 2], vec![5]]);
        assert_eq!(p, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
    }

    #[test]
    fn nilpotent_sum_is_clamped() {
        let tasks = names(&["t"]);
        let f = parse_formula("forall x: ans(x)", &tasks).unwrap();
        let samples = [sample(&[0.1, 0.9], &[1.0]), sample(&[0.2, 0.8], &[1.0])];
        let l = compile(&f, &Semantics::lukasiewicz(), 2, &tasks).unwrap();
        assert_eq!(l.eval(&samples).unwrap(), 1.0);
        let t = truth_degree(&f, &samples, &tasks, &Semantics::lukasiewicz()).unwrap();
        assert_eq!(t.value(), 0.0);
    }
}
