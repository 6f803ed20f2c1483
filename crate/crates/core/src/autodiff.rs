//! Reverse-mode differentiation over scalar expression graphs.
//!
//! Nodes live in an arena and only refer to earlier nodes, so arena order is a
//! topological order: the forward pass is one sweep up, the reverse pass one
//! sweep down.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Input by slot index into the graph's input table.
    Input(usize),
    Const(f64),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Pow(NodeId, f64),
    Min(NodeId, NodeId),
    Max(NodeId, NodeId),
    Abs(NodeId),
    /// `max(0, x)`; subgradient 0 for strictly negative `x`, 1 otherwise.
    ClampLower(NodeId),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("non-finite value at node {0}")]
    NonFiniteResult(usize),
    #[error("expected {expected} input values, got {got}")]
    InputCount { expected: usize, got: usize },
}

/// Append-only arena of scalar operations with named inputs.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Op>,
    inputs: Vec<String>,
    input_nodes: Vec<NodeId>,
    by_name: HashMap<String, usize>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(op);
        id
    }

    /// Input node for `name`; repeated calls with one name share the node.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(&slot) = self.by_name.get(name) {
            return self.input_nodes[slot];
        }
        let slot = self.inputs.len();
        let id = self.push(Op::Input(slot));
        self.inputs.push(name.to_string());
        self.input_nodes.push(id);
        self.by_name.insert(name.to_string(), slot);
        id
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const(v))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b))
    }
    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a))
    }
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }
    pub fn pow(&mut self, a: NodeId, exponent: f64) -> NodeId {
        self.push(Op::Pow(a, exponent))
    }
    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Min(a, b))
    }
    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Max(a, b))
    }
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Abs(a))
    }
    pub fn clamp_lower(&mut self, a: NodeId) -> NodeId {
        self.push(Op::ClampLower(a))
    }

    /// Left-to-right sum; an empty slice sums to the constant 0.
    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        match terms.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    /// Left fold with `min`; `None` for an empty slice.
    pub fn min_all(&mut self, terms: &[NodeId]) -> Option<NodeId> {
        let (&first, rest) = terms.split_first()?;
        Some(rest.iter().fold(first, |acc, &t| self.min(acc, t)))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[id.index()]
    }

    pub fn input_names(&self) -> &[String] {
        &self.inputs
    }

    pub fn input_slot(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Forward values of every node up to and including `root`, with inputs
    /// given by slot.
    pub fn forward(&self, root: NodeId, inputs: &[f64]) -> Result<Vec<f64>, AutodiffError> {
        if inputs.len() != self.inputs.len() {
            return Err(AutodiffError::InputCount {
                expected: self.inputs.len(),
                got: inputs.len(),
            });
        }
        let n = root.index() + 1;
        let mut vals: Vec<f64> = Vec::with_capacity(n);
        for (i, op) in self.nodes[..n].iter().enumerate() {
            let v = |id: NodeId| vals[id.index()];
            let x = match *op {
                Op::Input(slot) => inputs[slot],
                Op::Const(c) => c,
                Op::Add(a, b) => v(a) + v(b),
                Op::Sub(a, b) => v(a) - v(b),
                Op::Mul(a, b) => v(a) * v(b),
                Op::Div(a, b) => v(a) / v(b),
                Op::Neg(a) => -v(a),
                Op::Log(a) => v(a).ln(),
                Op::Exp(a) => v(a).exp(),
                Op::Pow(a, e) => v(a).powf(e),
                Op::Min(a, b) => {
                    let (x, y) = (v(a), v(b));
                    if y < x {
                        y
                    } else {
                        x
                    }
                }
                Op::Max(a, b) => {
                    let (x, y) = (v(a), v(b));
                    if y > x {
                        y
                    } else {
                        x
                    }
                }
                Op::Abs(a) => v(a).abs(),
                Op::ClampLower(a) => v(a).max(0.0),
            };
            if !x.is_finite() {
                return Err(AutodiffError::NonFiniteResult(i));
            }
            vals.push(x);
        }
        Ok(vals)
    }

    /// Gradient of `root` with respect to every input slot.
    pub fn backward(&self, root: NodeId, vals: &[f64]) -> Vec<f64> {
        let n = root.index() + 1;
        let mut adj = vec![0.0; n];
        adj[root.index()] = 1.0;
        let mut grad = vec![0.0; self.inputs.len()];
        for i in (0..n).rev() {
            let d = adj[i];
            if d == 0.0 {
                continue;
            }
            let v = |id: NodeId| vals[id.index()];
            match self.nodes[i] {
                Op::Input(slot) => grad[slot] += d,
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    adj[a.index()] += d;
                    adj[b.index()] += d;
                }
                Op::Sub(a, b) => {
                    adj[a.index()] += d;
                    adj[b.index()] -= d;
                }
                Op::Mul(a, b) => {
                    adj[a.index()] += d * v(b);
                    adj[b.index()] += d * v(a);
                }
                Op::Div(a, b) => {
                    let y = v(b);
                    adj[a.index()] += d / y;
                    adj[b.index()] -= d * v(a) / (y * y);
                }
                Op::Neg(a) => adj[a.index()] -= d,
                Op::Log(a) => adj[a.index()] += d / v(a),
                Op::Exp(a) => adj[a.index()] += d * vals[i],
                Op::Pow(a, e) => adj[a.index()] += d * e * v(a).powf(e - 1.0),
                // ties route to the first argument
                Op::Min(a, b) => {
                    if v(b) < v(a) {
                        adj[b.index()] += d
                    } else {
                        adj[a.index()] += d
                    }
                }
                Op::Max(a, b) => {
                    if v(b) > v(a) {
                        adj[b.index()] += d
                    } else {
                        adj[a.index()] += d
                    }
                }
                Op::Abs(a) => {
                    if v(a) < 0.0 {
                        adj[a.index()] -= d
                    } else {
                        adj[a.index()] += d
                    }
                }
                Op::ClampLower(a) => {
                    if v(a) >= 0.0 {
                        adj[a.index()] += d
                    }
                }
            }
        }
        grad
    }

    /// Smallest distance of any kink argument from its switching point
    /// (`|a - b|` for min/max, `|a|` for abs and clamp).
    pub fn min_kink_gap(&self, root: NodeId, vals: &[f64]) -> Option<f64> {
        let n = root.index() + 1;
        self.nodes[..n]
            .iter()
            .filter_map(|op| match *op {
                Op::Min(a, b) | Op::Max(a, b) => Some((vals[a.index()] - vals[b.index()]).abs()),
                Op::Abs(a) | Op::ClampLower(a) => Some(vals[a.index()].abs()),
                _ => None,
            })
            .reduce(f64::min)
    }

    /// Which side of its kink every min/max/abs/clamp node is on. Two points
    /// with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self, root: NodeId, vals: &[f64]) -> Vec<bool> {
        let n = root.index() + 1;
        self.nodes[..n]
            .iter()
            .filter_map(|op| match *op {
                Op::Min(a, b) => Some(vals[a.index()] <= vals[b.index()]),
                Op::Max(a, b) => Some(vals[a.index()] >= vals[b.index()]),
                Op::Abs(a) | Op::ClampLower(a) => Some(vals[a.index()] >= 0.0),
                _ => None,
            })
            .collect()
    }

    fn write_prefix(&self, id: NodeId, out: &mut String) {
        let un = |name: &str, a: NodeId, out: &mut String| {
            let _ = write!(out, "({name} ");
            self.write_prefix(a, out);
            out.push(')');
        };
        match self.nodes[id.index()] {
            Op::Input(slot) => out.push_str(&self.inputs[slot]),
            Op::Const(c) => {
                let _ = write!(out, "{c}");
            }
            Op::Neg(a) => un("neg", a, out),
            Op::Log(a) => un("log", a, out),
            Op::Exp(a) => un("exp", a, out),
            Op::Abs(a) => un("abs", a, out),
            Op::ClampLower(a) => un("relu", a, out),
            Op::Pow(a, e) => {
                out.push_str("(pow ");
                self.write_prefix(a, out);
                let _ = write!(out, " {e})");
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Min(a, b) | Op::Max(a, b) => {
                let name = match self.nodes[id.index()] {
                    Op::Add(..) => "+",
                    Op::Sub(..) => "-",
                    Op::Mul(..) => "*",
                    Op::Div(..) => "/",
                    Op::Min(..) => "min",
                    _ => "max",
                };
                let _ = write!(out, "({name} ");
                self.write_prefix(a, out);
                out.push(' ');
                self.write_prefix(b, out);
                out.push(')');
            }
        }
    }
}

/// A graph together with the node whose value it denotes.
#[derive(Debug, Clone)]
pub struct Expr {
    pub graph: Graph,
    pub root: NodeId,
}

impl Expr {
    pub fn new(graph: Graph, root: NodeId) -> Self {
        Expr { graph, root }
    }

    pub fn input_names(&self) -> &[String] {
        self.graph.input_names()
    }

    fn slots(&self, inputs: &HashMap<String, f64>) -> Result<Vec<f64>, AutodiffError> {
        self.graph
            .input_names()
            .iter()
            .map(|name| {
                inputs
                    .get(name)
                    .copied()
                    .ok_or_else(|| AutodiffError::UnboundInput(name.clone()))
            })
            .collect()
    }

    pub fn eval_slots(&self, inputs: &[f64]) -> Result<f64, AutodiffError> {
        Ok(self.graph.forward(self.root, inputs)?[self.root.index()])
    }

    pub fn eval_forward(&self, inputs: &HashMap<String, f64>) -> Result<f64, AutodiffError> {
        self.eval_slots(&self.slots(inputs)?)
    }

    /// Value and gradient by input slot.
    pub fn value_and_grad_slots(&self, inputs: &[f64]) -> Result<(f64, Vec<f64>), AutodiffError> {
        let vals = self.graph.forward(self.root, inputs)?;
        let grad = self.graph.backward(self.root, &vals);
        Ok((vals[self.root.index()], grad))
    }

    pub fn eval_gradient(&self, inputs: &HashMap<String, f64>) -> Result<BTreeMap<String, f64>, AutodiffError> {
        let (_, grad) = self.value_and_grad_slots(&self.slots(inputs)?)?;
        Ok(self.graph.input_names().iter().cloned().zip(grad).collect())
    }

    /// Readable prefix notation, e.g. `(+ (neg (log p)) 1)`.
    pub fn to_prefix(&self) -> String {
        let mut out = String::new();
        self.graph.write_prefix(self.root, &mut out);
        out
    }

    /// Compare reverse-mode gradients against central differences.
    pub fn finite_diff_check(
        &self,
        inputs: &HashMap<String, f64>,
        h: f64,
        tol: f64,
    ) -> Result<GradientReport, AutodiffError> {
        let base = self.slots(inputs)?;
        let vals = self.graph.forward(self.root, &base)?;
        let analytic = self.graph.backward(self.root, &vals);
        let min_kink_gap = self.graph.min_kink_gap(self.root, &vals);
        let mut numeric = Vec::with_capacity(base.len());
        let signature = self.graph.branch_signature(self.root, &vals);
        let mut crosses_kink = false;
        let mut probe = base.clone();
        let side = |probe: &[f64], crosses: &mut bool| -> Result<f64, AutodiffError> {
            let v = self.graph.forward(self.root, probe)?;
            *crosses |= self.graph.branch_signature(self.root, &v) != signature;
            Ok(v[self.root.index()])
        };
        for i in 0..base.len() {
            probe[i] = base[i] + h;
            let up = side(&probe, &mut crosses_kink)?;
            probe[i] = base[i] - h;
            let down = side(&probe, &mut crosses_kink)?;
            probe[i] = base[i];
            numeric.push((up - down) / (2.0 * h));
        }
        let max_rel_error = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &f)| relative_error(a, f))
            .fold(0.0, f64::max);
        let names = self.graph.input_names();
        Ok(GradientReport {
            analytic: names.iter().cloned().zip(analytic).collect(),
            numeric: names.iter().cloned().zip(numeric).collect(),
            max_rel_error,
            tolerance: tol,
            step: h,
            passed: max_rel_error <= tol,
            min_kink_gap,
            near_kink: crosses_kink,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_prefix())
    }
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-8)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientReport {
    pub analytic: BTreeMap<String, f64>,
    pub numeric: BTreeMap<String, f64>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub step: f64,
    pub passed: bool,
    /// Distance of the closest min/max/abs/clamp argument from its kink.
    pub min_kink_gap: Option<f64>,
    /// True when some `±h` probe switches a min/max/abs/clamp branch, so the
    /// central difference straddles a kink.
    pub near_kink: bool,
}
