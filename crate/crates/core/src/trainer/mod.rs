//! Training a two-head classifier with the original, hybrid and logic regimes.
//!
//! The loss over a batch is always built by
//! [`weighted_loss`](crate::compiler::weighted_loss); its gradient with
//! respect to the output probabilities comes from the autodiff graph and is
//! pushed through softmax and the dense layers by [`ModelParams::backward`].

mod model;
pub mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::relative_error;
use crate::batcher::{build_hybrid_batches, group_families, QuestionRecord, DEFAULT_BATCH_SIZE};
use crate::compiler::{family_pairs, weighted_loss, CompileError, InputRef, LossWeights, SampleOutputs, TotalLoss};
use crate::entailment::EntailmentKb;
use crate::metrics::Prediction;
use crate::tnorm::{Semantics, DEFAULT_EPSILON};

pub use model::{Activations, Dims, Model, ModelParams, CHECKPOINT_VERSION, TASK_HIDDEN};

pub const DEFAULT_HIDDEN: usize = 64;
pub const CURVE_HEADER: &str = "epoch,answer_loss,task_loss,logic_loss,answer_acc,task_acc";

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("record `{0}` has no features")]
    MissingFeatures(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training records")]
    Empty,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Batch(#[from] crate::batcher::BatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Random batches, answer loss only.
    Original,
    /// Family-prefixed batches, answer loss only.
    Hybrid,
    /// Family-prefixed batches with the consistency loss and task supervision.
    Logic,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Original, Mode::Hybrid, Mode::Logic];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Original => "original",
            Mode::Hybrid => "hybrid",
            Mode::Logic => "logic",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Mode::Original),
            "hybrid" => Ok(Mode::Hybrid),
            "logic" => Ok(Mode::Logic),
            _ => Err(format!("unknown mode `{s}` (expected original, hybrid or logic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub beta: f64,
    pub semantics: Semantics,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: usize,
    /// Also supervise the task head in hybrid mode.
    pub duo_task: bool,
    pub include_task_antecedent: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Logic,
            beta: 1.0,
            semantics: Semantics::product(),
            learning_rate: 1e-4,
            epochs: 60,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 42,
            hidden: DEFAULT_HIDDEN,
            duo_task: false,
            include_task_antecedent: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta {} must be finite and non-negative", self.beta));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch size and hidden width must be positive".into());
        }
        self.semantics
            .generator()
            .map_err(|e| TrainError::InvalidConfig(format!("semantics: {e}")))?;
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        match self.mode {
            Mode::Original | Mode::Hybrid => LossWeights {
                logic: 0.0,
                answer: 1.0,
                task: if self.duo_task { 1.0 } else { 0.0 },
            },
            Mode::Logic => LossWeights {
                logic: self.beta,
                answer: 1.0,
                task: 1.0,
            },
        }
    }
}

/// Per-epoch means over the samples seen in that epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub answer_loss: f64,
    pub task_loss: f64,
    pub logic_loss: f64,
    pub answer_acc: f64,
    pub task_acc: f64,
    /// The weighted objective actually minimized.
    #[serde(skip)]
    pub objective: f64,
}

pub fn write_curves(mut w: impl Write, rows: &[CurveRow]) -> std::io::Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epoch, r.answer_loss, r.task_loss, r.logic_loss, r.answer_acc, r.task_acc
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub curves: Vec<CurveRow>,
}

/// Record features and label indices, checked once up front.
struct Prepared<'a> {
    features: Vec<&'a [f64]>,
    answers: Vec<usize>,
    tasks: Vec<usize>,
}

fn features_of(r: &QuestionRecord) -> Result<&[f64], TrainError> {
    r.features
        .as_deref()
        .ok_or_else(|| TrainError::MissingFeatures(r.id.clone()))
}

fn prepare<'a>(records: &'a [QuestionRecord], model: &Model) -> Result<Prepared<'a>, TrainError> {
    let answer_ix: HashMap<&str, usize> = model.answers.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let task_ix: HashMap<&str, usize> = model.tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let dim = model.params.dims.input;
    let mut p = Prepared {
        features: Vec::with_capacity(records.len()),
        answers: Vec::with_capacity(records.len()),
        tasks: Vec::with_capacity(records.len()),
    };
    for r in records {
        let f = features_of(r)?;
        if f.len() != dim {
            return Err(TrainError::ShapeMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        p.features.push(f);
        p.answers.push(
            *answer_ix
                .get(r.answer.as_str())
                .ok_or_else(|| TrainError::InvalidConfig(format!("answer `{}` outside the vocabulary", r.answer)))?,
        );
        p.tasks.push(*task_ix.get(r.task.as_str()).ok_or_else(|| TrainError::UnknownTask(r.task.clone()))?);
    }
    Ok(p)
}

/// Sorted distinct answers of `records`.
pub fn answer_vocabulary_of(records: &[QuestionRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.answer.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn clamp_probs(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&v| v.max(DEFAULT_EPSILON)).collect()
}

/// A batch of records in loss order plus the pairs the consistency loss
/// ranges over (positions within the batch).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub indices: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

/// Loss value, the three components and the parameter gradient of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: TotalLoss,
    pub grad: Vec<f64>,
    pub answer_correct: usize,
    pub task_correct: usize,
    /// Per-node branch choices of the loss graph plus the probability clamp
    /// pattern; equal signatures mean the same smooth piece.
    pub signature: Vec<bool>,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn batch_gradient(
    model: &Model,
    data: &Prepared<'_>,
    plan: &BatchPlan,
    kb: &EntailmentKb,
    cfg: &TrainConfig,
) -> Result<BatchGradient, TrainError> {
    let params = &model.params;
    let mut acts = Vec::with_capacity(plan.indices.len());
    let mut outputs = Vec::with_capacity(plan.indices.len());
    let mut signature = Vec::new();
    let (mut answer_correct, mut task_correct) = (0, 0);
    for &i in &plan.indices {
        let a = params.forward(data.features[i])?;
        answer_correct += usize::from(argmax(&a.answer_probs) == data.answers[i]);
        task_correct += usize::from(argmax(&a.task_probs) == data.tasks[i]);
        signature.extend(a.answer_probs.iter().chain(&a.task_probs).map(|&v| v < DEFAULT_EPSILON));
        outputs.push(SampleOutputs {
            answer_probs: clamp_probs(&a.answer_probs),
            task_probs: clamp_probs(&a.task_probs),
            gold_answer: data.answers[i],
            gold_task: data.tasks[i],
        });
        acts.push(a);
    }
    let loss = weighted_loss(
        &outputs,
        &plan.pairs,
        kb,
        &cfg.semantics,
        cfg.weights(),
        cfg.include_task_antecedent,
    )?;
    let compiled = &loss.compiled;
    let slots = compiled.bind(&outputs)?;
    let graph = &compiled.expr.graph;
    let vals = graph.forward(compiled.expr.root, &slots).map_err(CompileError::from)?;
    let slot_grad = graph.backward(compiled.expr.root, &vals);
    signature.extend(graph.branch_signature(compiled.expr.root, &vals));

    let mut d_pa: Vec<Vec<f64>> = acts.iter().map(|a| vec![0.0; a.answer_probs.len()]).collect();
    let mut d_pt: Vec<Vec<f64>> = acts.iter().map(|a| vec![0.0; a.task_probs.len()]).collect();
    for (r, g) in compiled.schema.iter().zip(&slot_grad) {
        match *r {
            InputRef::Answer { sample } => {
                let k = outputs[sample].gold_answer;
                if acts[sample].answer_probs[k] >= DEFAULT_EPSILON {
                    d_pa[sample][k] += g;
                }
            }
            InputRef::Task { sample, index, .. } => {
                if acts[sample].task_probs[index] >= DEFAULT_EPSILON {
                    d_pt[sample][index] += g;
                }
            }
        }
    }
    let mut grad = vec![0.0; params.data.len()];
    for (s, &i) in plan.indices.iter().enumerate() {
        params.backward(data.features[i], &acts[s], &d_pa[s], &d_pt[s], &mut grad);
    }
    Ok(BatchGradient {
        loss,
        grad,
        answer_correct,
        task_correct,
        signature,
    })
}

/// The batches of one epoch. Every mode takes one step per family so the
/// three regimes see the same number of updates.
fn epoch_plans(
    cfg: &TrainConfig,
    records: &[QuestionRecord],
    families: &[crate::batcher::Family],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BatchPlan>, TrainError> {
    let n = records.len();
    let seed: u64 = rng.random();
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    match cfg.mode {
        Mode::Original => {
            let size = cfg.batch_size.min(n);
            Ok((0..families.len())
                .map(|_| BatchPlan {
                    indices: rand::seq::index::sample(&mut order_rng, n, size).into_vec(),
                    pairs: vec![],
                })
                .collect())
        }
        Mode::Hybrid | Mode::Logic => {
            let pool: Vec<usize> = (0..n).collect();
            let mut batches = build_hybrid_batches(families, &pool, cfg.batch_size, seed)?;
            use rand::seq::SliceRandom;
            batches.shuffle(&mut order_rng);
            Ok(batches
                .into_iter()
                .map(|b| {
                    let pairs = if cfg.mode == Mode::Logic {
                        family_pairs(&[(0..b.family_part.len()).collect()])
                    } else {
                        vec![]
                    };
                    BatchPlan {
                        indices: b.indices().collect(),
                        pairs,
                    }
                })
                .collect())
        }
    }
}

fn new_model(cfg: &TrainConfig, records: &[QuestionRecord], kb: &EntailmentKb) -> Result<Model, TrainError> {
    let first = records.first().ok_or(TrainError::Empty)?;
    let answers = answer_vocabulary_of(records);
    let tasks = kb.task_names();
    let dims = Dims {
        input: features_of(first)?.len(),
        hidden: cfg.hidden,
        answers: answers.len(),
        task_hidden: TASK_HIDDEN,
        tasks: tasks.len(),
    };
    Ok(Model {
        params: ModelParams::init(dims, cfg.seed),
        answers,
        tasks,
    })
}

/// Train from a fresh initialization with plain SGD.
pub fn train(cfg: &TrainConfig, records: &[QuestionRecord], kb: &EntailmentKb) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let model = new_model(cfg, records, kb)?;
    train_from(cfg, model, records, kb)
}

/// Continue training `model`.
pub fn train_from(
    cfg: &TrainConfig,
    mut model: Model,
    records: &[QuestionRecord],
    kb: &EntailmentKb,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(TrainError::Empty);
    }
    if model.tasks != kb.task_names() {
        return Err(TrainError::InvalidConfig("model tasks differ from the knowledge base".into()));
    }
    let data = prepare(records, &model)?;
    let families = group_families(records);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut curves = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let plans = epoch_plans(cfg, records, &families, &mut rng)?;
        let mut sums = [0.0; 4];
        let (mut seen, mut ans_ok, mut task_ok) = (0usize, 0usize, 0usize);
        for (b, plan) in plans.iter().enumerate() {
            let g = batch_gradient(&model, &data, plan, kb, cfg)?;
            let l = &g.loss;
            if !(l.value.is_finite() && g.grad.iter().all(|v| v.is_finite())) {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            sums[0] += l.answer;
            sums[1] += l.task;
            sums[2] += l.logic;
            sums[3] += l.value;
            seen += plan.indices.len();
            ans_ok += g.answer_correct;
            task_ok += g.task_correct;
            if cfg.learning_rate > 0.0 {
                for (p, d) in model.params.data.iter_mut().zip(&g.grad) {
                    *p -= cfg.learning_rate * d;
                }
            }
        }
        let n = seen.max(1) as f64;
        curves.push(CurveRow {
            epoch,
            answer_loss: sums[0] / n,
            task_loss: sums[1] / n,
            logic_loss: sums[2] / n,
            answer_acc: ans_ok as f64 / n,
            task_acc: task_ok as f64 / n,
            objective: sums[3] / n,
        });
    }
    Ok(TrainOutput { model, curves })
}

/// One line of a prediction file, readable as a [`Prediction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub answer: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_probs: Option<Vec<f64>>,
}

impl From<PredictionRow> for Prediction {
    fn from(r: PredictionRow) -> Self {
        Prediction {
            id: r.id,
            answer: r.answer,
            task: Some(r.task),
        }
    }
}

/// Argmax answer and task for each record.
pub fn predict(model: &Model, records: &[QuestionRecord], include_probs: bool) -> Result<Vec<PredictionRow>, TrainError> {
    records
        .iter()
        .map(|r| {
            let a = model.params.forward(features_of(r)?)?;
            Ok(PredictionRow {
                id: r.id.clone(),
                answer: model.answers[argmax(&a.answer_probs)].clone(),
                task: model.tasks[argmax(&a.task_probs)].clone(),
                answer_probs: include_probs.then(|| a.answer_probs.clone()),
                task_probs: include_probs.then_some(a.task_probs),
            })
        })
        .collect()
}

pub fn write_prediction_rows(mut w: impl Write, rows: &[PredictionRow]) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamGradReport {
    pub checked: Vec<ParamCheck>,
    /// Parameters whose ±h neighbourhood crosses a kink.
    pub skipped: Vec<usize>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central differences of the batch loss at `n` random parameters against the
/// chained analytic gradient. Parameters whose perturbation changes a branch
/// choice are replaced by fresh draws.
#[allow(clippy::too_many_arguments)]
pub fn param_gradient_check(
    model: &Model,
    records: &[QuestionRecord],
    plan: &BatchPlan,
    kb: &EntailmentKb,
    cfg: &TrainConfig,
    n: usize,
    h: f64,
    tol: f64,
    seed: u64,
) -> Result<ParamGradReport, TrainError> {
    let data = prepare(records, model)?;
    let base = batch_gradient(model, &data, plan, kb, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = model.params.data.len();
    let mut checked = Vec::new();
    let mut skipped = Vec::new();
    let mut probe = model.clone();
    let mut attempts = 0;
    while checked.len() < n && attempts < 50 * n.max(1) {
        attempts += 1;
        let i = rng.random_range(0..total);
        if checked.iter().any(|c: &ParamCheck| c.index == i) || skipped.contains(&i) {
            continue;
        }
        let orig = probe.params.data[i];
        probe.params.data[i] = orig + h;
        let up = batch_gradient(&probe, &data, plan, kb, cfg)?;
        probe.params.data[i] = orig - h;
        let down = batch_gradient(&probe, &data, plan, kb, cfg)?;
        probe.params.data[i] = orig;
        if up.signature != base.signature || down.signature != base.signature {
            skipped.push(i);
            continue;
        }
        let numeric = (up.loss.value - down.loss.value) / (2.0 * h);
        let analytic = base.grad[i];
        checked.push(ParamCheck {
            index: i,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    let max_rel_error = checked.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(ParamGradReport {
        passed: checked.len() == n && max_rel_error <= tol,
        checked,
        skipped,
        max_rel_error,
        tolerance: tol,
    })
}

/// The first logic-mode batch for `records`, as used during training.
pub fn first_plan(cfg: &TrainConfig, records: &[QuestionRecord]) -> Result<BatchPlan, TrainError> {
    let families = group_families(records);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    epoch_plans(cfg, records, &families, &mut rng)?
        .into_iter()
        .next()
        .ok_or(TrainError::Empty)
}

/// A freshly initialized model for `records`.
pub fn init_model(cfg: &TrainConfig, records: &[QuestionRecord], kb: &EntailmentKb) -> Result<Model, TrainError> {
    cfg.validate()?;
    new_model(cfg, records, kb)
}
