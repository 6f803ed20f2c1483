//! Semantic-task vocabulary and the entailment relations between the tasks of
//! two questions in one family, shipped as checked data files.
//!
//! A rule `forall x1 forall x2: a(x1) => b(x2)` states that a question with
//! task `a` entails a question with task `b` about the same argument. Rule
//! ids are 1-based positions in the rule file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fol::{self, Atom, BinaryOp, FolError, Formula, KnowledgeBase, Quantifier, Vocabulary};
use crate::tnorm::{Connective, Semantics, TnormError, TruthDegree};

pub const RULES_FILE: &str = "gqa_entailments.rules";
pub const TASKS_FILE: &str = "tasks.json";

const BUILTIN_RULES: &str = include_str!("../../../kb/gqa_entailments.rules");
const BUILTIN_TASKS: &str = include_str!("../../../kb/tasks.json");

/// Structural question type, as used for per-type accuracy splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structural {
    Verify,
    Query,
    Choose,
    Logical,
    Compare,
    Other,
}

/// What the question is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticCategory {
    Attr,
    Cat,
    Global,
    Obj,
    Rel,
}

impl fmt::Display for Structural {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Structural::Verify => "verify",
            Structural::Query => "query",
            Structural::Choose => "choose",
            Structural::Logical => "logical",
            Structural::Compare => "compare",
            Structural::Other => "other",
        };
        f.write_str(s)
    }
}

impl fmt::Display for SemanticCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SemanticCategory::Attr => "attr",
            SemanticCategory::Cat => "cat",
            SemanticCategory::Global => "global",
            SemanticCategory::Obj => "obj",
            SemanticCategory::Rel => "rel",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemanticTask {
    pub name: String,
    pub structural: Structural,
    pub semantic: SemanticCategory,
}

/// Category labels derived from the task name.
pub fn derive_categories(name: &str) -> (Structural, SemanticCategory) {
    let structural = if name.starts_with("verify") {
        Structural::Verify
    } else if name.starts_with("query") {
        Structural::Query
    } else if name.starts_with("choose") {
        Structural::Choose
    } else if name.starts_with("exist") {
        if name.contains("And") || name.contains("Or") {
            Structural::Logical
        } else {
            Structural::Verify
        }
    } else if ["compare", "common", "twoSame", "twoDiff", "allSame", "allDiff"]
        .iter()
        .any(|p| name.starts_with(p))
    {
        Structural::Compare
    } else {
        Structural::Other
    };
    let semantic = if name.contains("Global") {
        SemanticCategory::Global
    } else if name.contains("Rel") {
        SemanticCategory::Rel
    } else if name.contains("Attr") || structural == Structural::Compare {
        SemanticCategory::Attr
    } else if name.contains("Obj") {
        SemanticCategory::Cat
    } else {
        SemanticCategory::Obj
    };
    (structural, semantic)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RuleConnective {
    #[serde(rename = "=>")]
    Imply,
    #[serde(rename = "<=>")]
    Iff,
}

impl From<RuleConnective> for Connective {
    fn from(c: RuleConnective) -> Self {
        match c {
            RuleConnective::Imply => Connective::ResidualImply,
            RuleConnective::Iff => Connective::BiResiduum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntailmentRule {
    /// 1-based position in the rule file.
    pub id: usize,
    pub name: String,
    /// Index of the antecedent task in the task list.
    pub src: usize,
    pub dst: usize,
    pub connective: RuleConnective,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KbError {
    #[error("data file corrupt: {0}")]
    DataFileCorrupt(String),
    #[error("rule `{0}` is not of the form `forall x1 forall x2: a(x1) => b(x2)` (or `<=>`)")]
    NotAnEntailment(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("expected a distribution over {expected} tasks, got {got}")]
    DistributionLength { expected: usize, got: usize },
    #[error("knowledge base has no rules")]
    Empty,
    #[error(transparent)]
    Parse(#[from] FolError),
    #[error(transparent)]
    Tnorm(#[from] TnormError),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct TasksFile {
    version: u32,
    tasks: Vec<String>,
    #[serde(default)]
    category_overrides: BTreeMap<String, CategoryOverride>,
    #[serde(default)]
    rules_file: Option<String>,
    #[serde(default)]
    rule_count: Option<usize>,
    #[serde(default)]
    rules_sha256: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct CategoryOverride {
    structural: Structural,
    semantic: SemanticCategory,
}

/// Task vocabulary plus entailment rules; immutable after load.
#[derive(Debug, Clone)]
pub struct EntailmentKb {
    tasks: Vec<SemanticTask>,
    index: HashMap<String, usize>,
    rules: Vec<EntailmentRule>,
    source: KnowledgeBase,
}

/// The shipped vocabulary and rules.
pub fn builtin_kb() -> Result<EntailmentKb, KbError> {
    EntailmentKb::from_texts(BUILTIN_TASKS, BUILTIN_RULES)
}

impl EntailmentKb {
    /// Load `tasks.json` and the rule file it names from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, KbError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| KbError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let tasks_text = read(&dir.join(TASKS_FILE))?;
        let meta: TasksFile = serde_json::from_str(&tasks_text)
            .map_err(|e| KbError::DataFileCorrupt(format!("{TASKS_FILE}: {e}")))?;
        let rules_name = meta.rules_file.as_deref().unwrap_or(RULES_FILE);
        let rules_text = read(&dir.join(rules_name))?;
        Self::from_texts(&tasks_text, &rules_text)
    }

    pub fn from_texts(tasks_json: &str, rules_text: &str) -> Result<Self, KbError> {
        let meta: TasksFile = serde_json::from_str(tasks_json)
            .map_err(|e| KbError::DataFileCorrupt(format!("{TASKS_FILE}: {e}")))?;
        if let Some(expected) = &meta.rules_sha256 {
            let actual = hex::encode(Sha256::digest(rules_text.as_bytes()));
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(KbError::DataFileCorrupt(format!(
                    "rule file checksum {actual} does not match {expected}"
                )));
            }
        }
        let mut index = HashMap::new();
        let mut tasks = Vec::with_capacity(meta.tasks.len());
        for name in &meta.tasks {
            if index.insert(name.clone(), tasks.len()).is_some() {
                return Err(KbError::DataFileCorrupt(format!("task `{name}` listed twice")));
            }
            let (structural, semantic) = match meta.category_overrides.get(name) {
                Some(o) => (o.structural, o.semantic),
                None => derive_categories(name),
            };
            tasks.push(SemanticTask {
                name: name.clone(),
                structural,
                semantic,
            });
        }
        if let Some(unknown) = meta.category_overrides.keys().find(|k| !index.contains_key(*k)) {
            return Err(KbError::DataFileCorrupt(format!("override for unknown task `{unknown}`")));
        }
        let source = fol::parse_kb(rules_text, &meta.tasks)?;
        if let Some(expected) = meta.rule_count {
            if source.len() != expected {
                return Err(KbError::DataFileCorrupt(format!(
                    "expected {expected} rules, found {}",
                    source.len()
                )));
            }
        }
        let mut rules = Vec::with_capacity(source.len());
        let mut seen = HashSet::new();
        for (i, rule) in source.rules().iter().enumerate() {
            let (a, connective, b) =
                entailment_shape(&rule.formula).ok_or_else(|| KbError::NotAnEntailment(rule.name.clone()))?;
            let (src, dst) = (index[a], index[b]);
            if src == dst {
                return Err(KbError::DataFileCorrupt(format!("rule `{}` relates a task to itself", rule.name)));
            }
            if !seen.insert((src, dst, connective)) {
                return Err(KbError::DataFileCorrupt(format!("rule `{}` duplicates another rule", rule.name)));
            }
            rules.push(EntailmentRule {
                id: i + 1,
                name: rule.name.clone(),
                src,
                dst,
                connective,
            });
        }
        Ok(EntailmentKb {
            tasks,
            index,
            rules,
            source,
        })
    }

    pub fn tasks(&self) -> &[SemanticTask] {
        &self.tasks
    }

    pub fn task_names(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.name.clone()).collect()
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn task(&self, name: &str) -> Option<&SemanticTask> {
        self.task_index(name).map(|i| &self.tasks[i])
    }

    pub fn rules(&self) -> &[EntailmentRule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> Option<&EntailmentRule> {
        id.checked_sub(1).and_then(|i| self.rules.get(i))
    }

    /// First rule from `src` to `dst`, if any.
    pub fn find_rule(&self, src: &str, dst: &str) -> Option<&EntailmentRule> {
        let (s, d) = (self.task_index(src)?, self.task_index(dst)?);
        self.rules.iter().find(|r| r.src == s && r.dst == d)
    }

    /// The rules as parsed formulae.
    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.source
    }

    fn check_len(&self, probs: &[f64]) -> Result<(), KbError> {
        if probs.len() != self.tasks.len() {
            return Err(KbError::DistributionLength {
                expected: self.tasks.len(),
                got: probs.len(),
            });
        }
        Ok(())
    }

    /// Truth degree of `src(x1) □ dst(x2)` under `sem`.
    pub fn rule_truth(
        &self,
        rule: &EntailmentRule,
        tprobs1: &[f64],
        tprobs2: &[f64],
        sem: &Semantics,
    ) -> Result<TruthDegree, KbError> {
        self.check_len(tprobs1)?;
        self.check_len(tprobs2)?;
        let x = TruthDegree::new(tprobs1[rule.src])?;
        let y = TruthDegree::new(tprobs2[rule.dst])?;
        Ok(sem.eval_connective(rule.connective.into(), x, Some(y))?)
    }

    /// Weak disjunction over all rules: the most satisfied rule and its truth.
    /// Ties go to the lowest rule id.
    pub fn best_relation_truth(
        &self,
        tprobs1: &[f64],
        tprobs2: &[f64],
        sem: &Semantics,
    ) -> Result<(usize, TruthDegree), KbError> {
        let mut best: Option<(usize, TruthDegree)> = None;
        for rule in &self.rules {
            let t = self.rule_truth(rule, tprobs1, tprobs2, sem)?;
            if best.is_none_or(|(_, b)| t > b) {
                best = Some((rule.id, t));
            }
        }
        best.ok_or(KbError::Empty)
    }
}

impl Vocabulary for EntailmentKb {
    fn contains_task(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }
}

// forall x1 forall x2: a(x1) => b(x2)
fn entailment_shape(f: &Formula) -> Option<(&str, RuleConnective, &str)> {
    let Formula::Quant(Quantifier::ForAll, v1, inner) = f else {
        return None;
    };
    let Formula::Quant(Quantifier::ForAll, v2, body) = inner.as_ref() else {
        return None;
    };
    let Formula::Binary(op, l, r) = body.as_ref() else {
        return None;
    };
    let connective = match op {
        BinaryOp::ResidualImply => RuleConnective::Imply,
        BinaryOp::BiResiduum => RuleConnective::Iff,
        _ => return None,
    };
    match (l.as_ref(), r.as_ref()) {
        (
            Formula::Atom(Atom::Task { task: a, var: va }),
            Formula::Atom(Atom::Task { task: b, var: vb }),
        ) if va == v1 && vb == v2 && v1 != v2 => Some((a, connective, b)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(kb: &EntailmentKb, name: &str) -> Vec<f64> {
        let mut v = vec![0.0; kb.tasks().len()];
        v[kb.task_index(name).unwrap()] = 1.0;
        v
    }

    #[test]
    fn builtin_counts() {
        let kb = builtin_kb().unwrap();
        assert_eq!(kb.tasks().len(), 48);
        // the rule table lists 45 relations
        assert_eq!(kb.rules().len(), 45);
        let r = kb.find_rule("verifyGlobalTrue", "verifyGlobalFalse").unwrap();
        assert_eq!(r.connective, RuleConnective::Imply);
        let iff = kb.rules().iter().filter(|r| r.connective == RuleConnective::Iff).count();
        assert_eq!(iff, 9);
        assert_eq!(
            kb.find_rule("twoSameTrue", "twoDiffFalse").unwrap().connective,
            RuleConnective::Iff
        );
    }

    #[test]
    fn categories() {
        let kb = builtin_kb().unwrap();
        let t = kb.task("verifyGlobalTrue").unwrap();
        assert_eq!((t.structural, t.semantic), (Structural::Verify, SemanticCategory::Global));
        let t = kb.task("existAttrOrTrue").unwrap();
        assert_eq!((t.structural, t.semantic), (Structural::Logical, SemanticCategory::Attr));
        let t = kb.task("queryAttrObj").unwrap();
        assert_eq!((t.structural, t.semantic), (Structural::Query, SemanticCategory::Cat));
        let t = kb.task("chooseRel").unwrap();
        assert_eq!((t.structural, t.semantic), (Structural::Choose, SemanticCategory::Rel));
        assert!(kb.tasks().iter().all(|t| t.structural != Structural::Other));
    }

    #[test]
    fn rule_truths() {
        let kb = builtin_kb().unwrap();
        let n = kb.tasks().len();
        let rule = kb.find_rule("queryObj", "queryAttrObj").unwrap().clone();
        let mut p1 = vec![0.0; n];
        let mut p2 = vec![0.0; n];
        p1[rule.src] = 0.9;
        p2[rule.dst] = 0.6;
        let t = kb.rule_truth(&rule, &p1, &p2, &Semantics::product()).unwrap();
        assert!((t.value() - 0.6 / 0.9).abs() < 1e-12);

        p1[rule.src] = 0.4;
        p2[rule.dst] = 0.9;
        let t = kb.rule_truth(&rule, &p1, &p2, &Semantics::lukasiewicz()).unwrap();
        assert_eq!(t.value(), 1.0);

        let iff = kb.find_rule("chooseAttr", "chooseObj").unwrap().clone();
        p1[iff.src] = 0.35;
        p2[iff.dst] = 0.35;
        for sem in [Semantics::product(), Semantics::lukasiewicz(), Semantics::godel()] {
            assert_eq!(kb.rule_truth(&iff, &p1, &p2, &sem).unwrap().value(), 1.0);
        }
        assert!(matches!(
            kb.rule_truth(&rule, &p1[..3], &p2, &Semantics::product()),
            Err(KbError::DistributionLength { .. })
        ));
    }

    #[test]
    fn best_relation() {
        let kb = builtin_kb().unwrap();
        let p1 = one_hot(&kb, "queryObj");
        let p2 = one_hot(&kb, "queryAttrObj");
        let (id, t) = kb.best_relation_truth(&p1, &p2, &Semantics::product()).unwrap();
        // x1 is queryObj with certainty, so only rules out of queryObj can be
        // fully satisfied; the one into queryAttrObj is rule 1
        assert_eq!(kb.rule(id).unwrap().name, "queryObj=>queryAttrObj");
        assert_eq!(t.value(), 1.0);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let kb = builtin_kb().unwrap();
        let n = kb.tasks().len();
        let uniform = vec![1.0 / n as f64; n];
        // every rule has equal operands, so every rule is fully true
        let (id, t) = kb.best_relation_truth(&uniform, &uniform, &Semantics::product()).unwrap();
        assert_eq!((id, t.value()), (1, 1.0));
    }

    #[test]
    fn corrupt_data_is_detected() {
        let tampered = BUILTIN_RULES.replace("queryObj(x1) => queryAttrObj(x2)", "queryObj(x1) => queryRel(x2)");
        assert!(matches!(
            EntailmentKb::from_texts(BUILTIN_TASKS, &tampered),
            Err(KbError::DataFileCorrupt(_))
        ));
        let mut meta: serde_json::Value = serde_json::from_str(BUILTIN_TASKS).unwrap();
        meta["rules_sha256"] = serde_json::Value::Null;
        meta["rule_count"] = 51.into();
        assert!(matches!(
            EntailmentKb::from_texts(&meta.to_string(), BUILTIN_RULES),
            Err(KbError::DataFileCorrupt(msg)) if msg.contains("expected 51")
        ));
    }

    #[test]
    fn non_entailment_rules_are_rejected() {
        let meta = r#"{"version": 1, "tasks": ["a", "b"]}"#;
        assert!(matches!(
            EntailmentKb::from_texts(meta, "rule \"r\": forall x: a(x) => b(x)\n"),
            Err(KbError::NotAnEntailment(_))
        ));
        let kb = EntailmentKb::from_texts(meta, "rule \"r\": forall x1 forall x2: a(x1) <=> b(x2)\n").unwrap();
        assert_eq!(kb.rules()[0].connective, RuleConnective::Iff);
    }
}
