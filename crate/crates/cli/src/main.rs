//! `logicloss` command-line entry point.
//!
//! Exit codes for every subcommand: 0 on success, 1 on invalid input data or
//! a failed check, 2 on usage errors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use logicloss::batcher::{batch_stats, BatchError, build_hybrid_batches, group_families, read_records, write_batches, write_records, QuestionRecord};
use logicloss::compiler::{compile, CompiledLoss, SampleOutputs};
use logicloss::entailment::{builtin_kb, EntailmentKb, TASKS_FILE};
use logicloss::fol::{parse_formula, render, Formula};
use logicloss::metrics::{evaluate, format_table, read_predictions};
use logicloss::tnorm::{Family, Semantics};
use logicloss::trainer::synthetic::generate_synthetic;
use logicloss::trainer::{predict, train, train_from, write_curves, write_prediction_rows, Mode, Model, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "logicloss", version, about = "Differentiable consistency losses from first-order rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile rules (or one formula) and print the loss expressions with their input schema.
    Compile(CompileArgs),
    /// Evaluate a compiled loss and its gradient on a bindings file.
    Eval(EvalArgs),
    /// Compare reverse-mode and finite-difference gradients of a compiled loss.
    GradCheck(GradCheckArgs),
    /// Generate a synthetic question set as JSON lines.
    GenData(GenDataArgs),
    /// Group records into families and write hybrid batches.
    Batch(BatchArgs),
    /// Train the toy model and write learning curves.
    Train(TrainArgs),
    /// Predict answers and tasks with a saved model.
    Predict(PredictArgs),
    /// Score predictions for accuracy, consistency and distribution.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SemanticsName {
    Godel,
    Lukasiewicz,
    Product,
    Ss,
    Frank,
}

#[derive(Args)]
struct SemanticsArgs {
    #[arg(long, value_enum, default_value = "product", env = "LOGICLOSS_SEMANTICS")]
    semantics: SemanticsName,
    /// Family parameter for `ss` and `frank` (`inf` allowed for frank).
    #[arg(long, env = "LOGICLOSS_LAMBDA", allow_negative_numbers = true)]
    lambda: Option<f64>,
}

impl SemanticsArgs {
    fn resolve(&self) -> Result<Semantics> {
        let family = |f| -> Result<Semantics> {
            let l = self.lambda.ok_or_else(|| usage("--lambda is required for this semantics"))?;
            Semantics::family(f, l).map_err(|e| usage(e.to_string()))
        };
        match self.semantics {
            SemanticsName::Godel => Ok(Semantics::godel()),
            SemanticsName::Lukasiewicz => Ok(Semantics::lukasiewicz()),
            SemanticsName::Product => Ok(Semantics::product()),
            SemanticsName::Ss => family(Family::SchweizerSklar),
            SemanticsName::Frank => family(Family::Frank),
        }
    }
}

#[derive(Args)]
struct KbArg {
    /// Knowledge-base directory, or a file inside it; the built-in rules when omitted.
    #[arg(long, env = "LOGICLOSS_KB")]
    kb: Option<PathBuf>,
}

impl KbArg {
    fn load(&self) -> Result<EntailmentKb> {
        let Some(path) = &self.kb else {
            return Ok(builtin_kb()?);
        };
        let dir = if path.is_dir() {
            path.as_path()
        } else if path.is_file() {
            path.parent().filter(|p| p.join(TASKS_FILE).is_file()).unwrap_or(Path::new("."))
        } else {
            bail!("knowledge base {} not found", path.display());
        };
        EntailmentKb::load_dir(dir).with_context(|| format!("loading knowledge base from {}", dir.display()))
    }
}

#[derive(Args)]
struct LossSource {
    /// A closed formula to compile instead of the knowledge-base rules.
    #[arg(long)]
    formula: Option<String>,
    /// Name of a single knowledge-base rule.
    #[arg(long, conflicts_with = "formula")]
    rule: Option<String>,
    /// Number of samples the quantifiers range over (bindings files set their own).
    #[arg(long, default_value_t = 2)]
    samples: usize,
    #[command(flatten)]
    kb: KbArg,
    #[command(flatten)]
    semantics: SemanticsArgs,
}

#[derive(Serialize)]
struct CompiledOut {
    name: String,
    formula: String,
    expr: String,
    schema: Vec<SchemaEntry>,
}

#[derive(Serialize)]
struct SchemaEntry {
    slot: usize,
    name: String,
    #[serde(flatten)]
    input: logicloss::compiler::InputRef,
}

impl LossSource {
    fn formulas(&self, kb: &EntailmentKb) -> Result<Vec<(String, Formula)>> {
        if let Some(text) = &self.formula {
            let f = parse_formula(text, &kb.task_names()[..]).context("parsing --formula")?;
            return Ok(vec![("formula".into(), f)]);
        }
        let rules = kb.knowledge_base().rules();
        match &self.rule {
            Some(name) => rules
                .iter()
                .find(|r| &r.name == name)
                .map(|r| vec![(r.name.clone(), r.formula.clone())])
                .ok_or_else(|| anyhow::anyhow!("no rule named `{name}`")),
            None => Ok(rules.iter().map(|r| (r.name.clone(), r.formula.clone())).collect()),
        }
    }

    fn single(&self, kb: &EntailmentKb) -> Result<(String, Formula)> {
        let mut all = self.formulas(kb)?;
        if all.len() != 1 {
            return Err(usage("pass --formula or --rule to select one loss"));
        }
        Ok(all.remove(0))
    }

    fn compile(&self, kb: &EntailmentKb, f: &Formula, samples: usize) -> Result<CompiledLoss> {
        if samples == 0 {
            return Err(usage("at least one sample is required"));
        }
        Ok(compile(f, &self.semantics.resolve()?, samples, &kb.task_names())?)
    }
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    source: LossSource,
}

/// Bindings file: `{"samples": [{"answer_probs": [...], "task_probs": [...], "gold_answer": 0, "gold_task": 3}]}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Bindings {
    samples: Vec<SampleIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleIn {
    answer_probs: Vec<f64>,
    task_probs: Vec<f64>,
    gold_answer: usize,
    gold_task: usize,
}

fn read_bindings(path: &Path) -> Result<Vec<SampleOutputs>> {
    let b: Bindings = serde_json::from_reader(BufReader::new(open(path)?))
        .with_context(|| format!("reading bindings {}", path.display()))?;
    b.samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            SampleOutputs::new(s.answer_probs, s.task_probs, s.gold_answer, s.gold_task)
                .with_context(|| format!("sample {i} in {}", path.display()))
        })
        .collect()
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: LossSource,
    /// JSON bindings file with one entry per sample.
    #[arg(long)]
    bindings: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    #[command(flatten)]
    source: LossSource,
    /// JSON bindings file; random distributions are drawn when omitted.
    #[arg(long)]
    bindings: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 42, env = "LOGICLOSS_SEED")]
    seed: u64,
    /// Answer vocabulary size for random bindings.
    #[arg(long, default_value_t = 4)]
    answers: usize,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 1000)]
    images: usize,
    #[arg(long, default_value_t = 42, env = "LOGICLOSS_SEED")]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 42, env = "LOGICLOSS_SEED")]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write batch statistics as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training records; synthetic data is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Images of synthetic data when --input is omitted.
    #[arg(long, default_value_t = 1000)]
    images: usize,
    #[arg(long, value_enum, default_value = "logic", env = "LOGICLOSS_MODE")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0, env = "LOGICLOSS_BETA")]
    beta: f64,
    #[command(flatten)]
    semantics: SemanticsArgs,
    #[arg(long, default_value_t = 60, env = "LOGICLOSS_EPOCHS")]
    epochs: usize,
    #[arg(long, default_value_t = 42, env = "LOGICLOSS_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 1e-4, env = "LOGICLOSS_LR")]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = logicloss::trainer::DEFAULT_HIDDEN)]
    hidden: usize,
    /// Supervise the task head in hybrid mode too.
    #[arg(long)]
    duo_task: bool,
    /// Drop the task terms from the consistency antecedent.
    #[arg(long)]
    no_task_antecedent: bool,
    #[command(flatten)]
    kb: KbArg,
    /// Continue from a saved model.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Learning-curve CSV; standard output when omitted.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Where to save the trained model.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Original,
    Hybrid,
    Logic,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Original => Mode::Original,
            ModeArg::Hybrid => Mode::Hybrid,
            ModeArg::Logic => Mode::Logic,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include the full probability vectors.
    #[arg(long)]
    probs: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[command(flatten)]
    kb: KbArg,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Also write the JSON report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// An error caused by how the command was invoked rather than by its data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_records(path: &Path) -> Result<Vec<QuestionRecord>> {
    read_records(BufReader::new(open(path)?)).with_context(|| format!("reading {}", path.display()))
}

fn json_line(w: &mut dyn Write, v: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, v)?;
    writeln!(w)?;
    Ok(())
}

fn run_compile(a: &CompileArgs) -> Result<()> {
    let kb = a.source.kb.load()?;
    let mut out = Vec::new();
    for (name, f) in a.source.formulas(&kb)? {
        let c = a.source.compile(&kb, &f, a.source.samples).with_context(|| format!("compiling `{name}`"))?;
        let schema = c
            .schema
            .iter()
            .enumerate()
            .map(|(slot, r)| SchemaEntry {
                slot,
                name: r.name(),
                input: r.clone(),
            })
            .collect();
        out.push(CompiledOut {
            name,
            formula: render(&f),
            expr: c.to_prefix(),
            schema,
        });
    }
    let mut w = output(None)?;
    json_line(&mut w, &out)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvalOut {
    name: String,
    value: f64,
    gradient: HashMap<String, f64>,
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let kb = a.source.kb.load()?;
    let (name, f) = a.source.single(&kb)?;
    let samples = read_bindings(&a.bindings)?;
    let c = a.source.compile(&kb, &f, samples.len())?;
    let (value, grad) = c.value_and_grad(&samples)?;
    let gradient = c.schema.iter().map(|r| r.name()).zip(grad).collect();
    let mut w = output(None)?;
    json_line(&mut w, &EvalOut { name, value, gradient })?;
    w.flush()?;
    Ok(())
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize, answers: usize, tasks: usize) -> Vec<SampleOutputs> {
    let dist = |rng: &mut ChaCha8Rng, k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    (0..n)
        .map(|_| SampleOutputs {
            answer_probs: dist(rng, answers),
            task_probs: dist(rng, tasks),
            gold_answer: rng.random_range(0..answers),
            gold_task: rng.random_range(0..tasks),
        })
        .collect()
}

fn run_grad_check(a: &GradCheckArgs) -> Result<bool> {
    if !(a.step > 0.0 && a.tol > 0.0) {
        return Err(usage("--step and --tol must be positive"));
    }
    if a.answers == 0 {
        return Err(usage("--answers must be positive"));
    }
    let kb = a.source.kb.load()?;
    let (_, f) = a.source.single(&kb)?;
    let samples = match &a.bindings {
        Some(p) => read_bindings(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            random_samples(&mut rng, a.source.samples, a.answers, kb.tasks().len())
        }
    };
    let c = a.source.compile(&kb, &f, samples.len())?;
    let inputs: HashMap<String, f64> = c.expr.input_names().iter().cloned().zip(c.bind(&samples)?).collect();
    let report = c.expr.finite_diff_check(&inputs, a.step, a.tol)?;
    let mut w = output(None)?;
    json_line(&mut w, &report)?;
    w.flush()?;
    if !report.passed {
        eprintln!("gradient check failed: max relative error {:e}", report.max_rel_error);
    }
    Ok(report.passed)
}

fn run_gen_data(a: &GenDataArgs) -> Result<()> {
    if a.images == 0 {
        return Err(usage("--images must be positive"));
    }
    let records = generate_synthetic(a.images, a.seed);
    let mut w = output(a.out.as_deref())?;
    write_records(&mut w, &records)?;
    w.flush()?;
    eprintln!("wrote {} records from {} images", records.len(), a.images);
    Ok(())
}

fn run_batch(a: &BatchArgs) -> Result<()> {
    let records = load_records(&a.input)?;
    let families = group_families(&records);
    let pool: Vec<usize> = (0..records.len()).collect();
    let batches = build_hybrid_batches(&families, &pool, a.batch_size, a.seed)?;
    let mut w = output(a.out.as_deref())?;
    write_batches(&mut w, &batches, &records)?;
    w.flush()?;
    let stats = batch_stats(&batches, &records);
    if let Some(p) = &a.stats {
        let mut s = output(Some(p))?;
        json_line(&mut s, &stats)?;
        s.flush()?;
    }
    eprintln!("{} families, {} batches", families.len(), stats.batches);
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let kb = a.kb.load()?;
    let records = match &a.input {
        Some(p) => load_records(p)?,
        None => generate_synthetic(a.images, a.seed),
    };
    let cfg = TrainConfig {
        mode: a.mode.into(),
        beta: a.beta,
        semantics: a.semantics.resolve()?,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        hidden: a.hidden,
        duo_task: a.duo_task,
        include_task_antecedent: !a.no_task_antecedent,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let out = match &a.resume {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            train_from(&cfg, Model::from_json(&text)?, &records, &kb)?
        }
        None => train(&cfg, &records, &kb)?,
    };
    let mut w = output(a.curves.as_deref())?;
    write_curves(&mut w, &out.curves)?;
    w.flush()?;
    if let Some(p) = &a.model {
        std::fs::write(p, out.model.to_json()).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(last) = out.curves.last() {
        eprintln!(
            "{} mode, epoch {}: answer accuracy {:.4}, logic loss {:.4}",
            cfg.mode, last.epoch, last.answer_acc, last.logic_loss
        );
    }
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).with_context(|| format!("cannot read {}", a.model.display()))?;
    let model = Model::from_json(&text)?;
    let records = load_records(&a.input)?;
    let rows = predict(&model, &records, a.probs)?;
    let mut w = output(a.out.as_deref())?;
    write_prediction_rows(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let preds = read_predictions(BufReader::new(open(&a.pred)?)).with_context(|| format!("reading {}", a.pred.display()))?;
    let gold = load_records(&a.gold)?;
    let kb = a.kb.load()?;
    let report = evaluate(&preds, &gold, &kb)?;
    if let Some(p) = &a.report {
        let mut w = output(Some(p))?;
        json_line(&mut w, &report)?;
        w.flush()?;
    }
    let mut w = output(None)?;
    match a.format {
        ReportFormat::Table => write!(w, "{}", format_table(&[("model", &report)]))?,
        ReportFormat::Json => json_line(&mut w, &report)?,
    }
    w.flush()?;
    if report.consistency_undefined {
        eprintln!("no question qualified as a consistency source");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Compile(a) => run_compile(a)?,
        Command::Eval(a) => run_eval(a)?,
        Command::GradCheck(a) => return run_grad_check(a),
        Command::GenData(a) => run_gen_data(a)?,
        Command::Batch(a) => run_batch(a)?,
        Command::Train(a) => run_train(a)?,
        Command::Predict(a) => run_predict(a)?,
        Command::Evaluate(a) => run_evaluate(a)?,
    }
    Ok(true)
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let kind = c
            .downcast_ref::<io::Error>()
            .map(io::Error::kind)
            .or_else(|| c.downcast_ref::<serde_json::Error>().and_then(serde_json::Error::io_error_kind))
            .or_else(|| match c.downcast_ref::<BatchError>() {
                Some(BatchError::Io(io)) => Some(io.kind()),
                _ => None,
            });
        kind == Some(io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
