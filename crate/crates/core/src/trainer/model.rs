//! Shared tanh encoder with an answer head and a two-layer task head.
//!
//! ```text
//! h  = tanh(W1 x + b1)
//! pa = softmax(Wa h + ba)
//! u  = tanh(Wt1 h + bt1)
//! pt = softmax(Wt2 u + bt2)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;

pub const TASK_HIDDEN: usize = 16;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub answers: usize,
    pub task_hidden: usize,
    pub tasks: usize,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    wa: usize,
    ba: usize,
    wt1: usize,
    bt1: usize,
    wt2: usize,
    bt2: usize,
    len: usize,
}

impl Dims {
    fn layout(&self) -> Layout {
        let Dims {
            input: i,
            hidden: h,
            answers: a,
            task_hidden: k,
            tasks: t,
        } = *self;
        let w1 = 0;
        let b1 = w1 + h * i;
        let wa = b1 + h;
        let ba = wa + a * h;
        let wt1 = ba + a;
        let bt1 = wt1 + k * h;
        let wt2 = bt1 + k;
        let bt2 = wt2 + t * k;
        Layout {
            w1,
            b1,
            wa,
            ba,
            wt1,
            bt1,
            wt2,
            bt2,
            len: bt2 + t,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// All weights in one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: Dims,
    pub data: Vec<f64>,
}

/// Per-sample intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub task_hidden: Vec<f64>,
    pub answer_probs: Vec<f64>,
    pub task_probs: Vec<f64>,
}

fn softmax(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

// out[r] = b[r] + Σ_c W[r, c] x[c]
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(r, &br)| br + w[r * x.len()..(r + 1) * x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

impl ModelParams {
    /// Normal initialization with variance `1 / fan_in`; zero biases.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let l = dims.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; l.len];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let n = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive fan-in");
            for v in &mut data[range] {
                *v = n.sample(&mut rng);
            }
        };
        fill(l.w1..l.b1, dims.input);
        fill(l.wa..l.ba, dims.hidden);
        fill(l.wt1..l.bt1, dims.hidden);
        fill(l.wt2..l.bt2, dims.task_hidden);
        ModelParams { dims, data }
    }

    pub fn zeros(dims: Dims) -> Self {
        ModelParams {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations, TrainError> {
        let d = self.dims;
        if x.len() != d.input {
            return Err(TrainError::ShapeMismatch {
                expected: d.input,
                got: x.len(),
            });
        }
        let l = d.layout();
        let p = &self.data;
        let mut hidden = affine(&p[l.w1..l.b1], &p[l.b1..l.wa], x);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut answer_probs = affine(&p[l.wa..l.ba], &p[l.ba..l.wt1], &hidden);
        softmax(&mut answer_probs);
        let mut task_hidden = affine(&p[l.wt1..l.bt1], &p[l.bt1..l.wt2], &hidden);
        task_hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut task_probs = affine(&p[l.wt2..l.bt2], &p[l.bt2..l.len], &task_hidden);
        softmax(&mut task_probs);
        Ok(Activations {
            hidden,
            task_hidden,
            answer_probs,
            task_probs,
        })
    }

    /// Accumulate into `grad` the parameter gradient of a loss whose gradient
    /// with respect to the two output distributions is `d_pa`, `d_pt`.
    pub fn backward(&self, x: &[f64], act: &Activations, d_pa: &[f64], d_pt: &[f64], grad: &mut [f64]) {
        let d = self.dims;
        let l = d.layout();
        let p = &self.data;
        let dza = softmax_backward(&act.answer_probs, d_pa);
        let dzt = softmax_backward(&act.task_probs, d_pt);

        // task head
        let mut du = vec![0.0; d.task_hidden];
        for (r, &g) in dzt.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[l.bt2 + r] += g;
            let row = l.wt2 + r * d.task_hidden;
            for c in 0..d.task_hidden {
                grad[row + c] += g * act.task_hidden[c];
                du[c] += g * p[row + c];
            }
        }
        let mut dh = vec![0.0; d.hidden];
        for (r, du_r) in du.iter().enumerate() {
            let g = du_r * (1.0 - act.task_hidden[r] * act.task_hidden[r]);
            grad[l.bt1 + r] += g;
            let row = l.wt1 + r * d.hidden;
            for c in 0..d.hidden {
                grad[row + c] += g * act.hidden[c];
                dh[c] += g * p[row + c];
            }
        }
        // answer head
        for (r, &g) in dza.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[l.ba + r] += g;
            let row = l.wa + r * d.hidden;
            for c in 0..d.hidden {
                grad[row + c] += g * act.hidden[c];
                dh[c] += g * p[row + c];
            }
        }
        // encoder
        for (r, dh_r) in dh.iter().enumerate() {
            let g = dh_r * (1.0 - act.hidden[r] * act.hidden[r]);
            if g == 0.0 {
                continue;
            }
            grad[l.b1 + r] += g;
            let row = l.w1 + r * d.input;
            for c in 0..d.input {
                grad[row + c] += g * x[c];
            }
        }
    }
}

// dz_k = p_k (g_k - Σ_j g_j p_j)
fn softmax_backward(p: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pk, gk)| pk * (gk - dot)).collect()
}

/// Trained parameters together with the label vocabularies they index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub answers: Vec<String>,
    pub tasks: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    schema_hash: String,
    model: Model,
}

impl Model {
    /// Hash of the architecture and vocabularies; a checkpoint only loads
    /// into the shape it was saved from.
    pub fn schema_hash(&self) -> String {
        let mut h = Sha256::new();
        let d = self.params.dims;
        h.update(format!(
            "mlp-tanh:{}:{}:{}:{}:{}\n",
            d.input, d.hidden, d.answers, d.task_hidden, d.tasks
        ));
        for a in &self.answers {
            h.update(format!("a:{a}\n"));
        }
        for t in &self.tasks {
            h.update(format!("t:{t}\n"));
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            schema_hash: self.schema_hash(),
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        let m = cp.model;
        let d = m.params.dims;
        if m.params.data.len() != d.param_count() || m.answers.len() != d.answers || m.tasks.len() != d.tasks {
            return Err(TrainError::Checkpoint("parameter shape does not match dims".into()));
        }
        if m.schema_hash() != cp.schema_hash {
            return Err(TrainError::Checkpoint("schema hash mismatch".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            input: 5,
            hidden: 4,
            answers: 3,
            task_hidden: 2,
            tasks: 6,
        }
    }

    #[test]
    fn outputs_are_distributions() {
        let m = ModelParams::init(dims(), 1);
        let a = m.forward(&[0.3, -1.0, 2.0, 0.0, 0.5]).unwrap();
        for p in [&a.answer_probs, &a.task_probs] {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
        let z = ModelParams::zeros(dims()).forward(&[1.0; 5]).unwrap();
        assert!(z.answer_probs.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(matches!(m.forward(&[1.0]), Err(TrainError::ShapeMismatch { expected: 5, got: 1 })));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = ModelParams::init(dims(), 2);
        let x = [0.3, -1.0, 2.0, 0.1, 0.5];
        // loss = -ln pa[1] - ln pt[4]
        let loss = |m: &ModelParams| {
            let a = m.forward(&x).unwrap();
            -a.answer_probs[1].ln() - a.task_probs[4].ln()
        };
        let act = m.forward(&x).unwrap();
        let mut d_pa = vec![0.0; 3];
        d_pa[1] = -1.0 / act.answer_probs[1];
        let mut d_pt = vec![0.0; 6];
        d_pt[4] = -1.0 / act.task_probs[4];
        let mut grad = vec![0.0; m.data.len()];
        m.backward(&x, &act, &d_pa, &d_pt, &mut grad);
        let h = 1e-6;
        for (i, &g) in grad.iter().enumerate() {
            let mut up = m.clone();
            up.data[i] += h;
            let mut down = m.clone();
            down.data[i] -= h;
            let num = (loss(&up) - loss(&down)) / (2.0 * h);
            assert!((num - g).abs() <= 1e-6 * num.abs().max(1.0), "param {i}: {num} vs {g}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = Model {
            params: ModelParams::init(dims(), 3),
            answers: vec!["yes".into(), "no".into(), "red".into()],
            tasks: (0..6).map(|i| format!("t{i}")).collect(),
        };
        let text = model.to_json();
        assert_eq!(Model::from_json(&text).unwrap(), model);
        let tampered = text.replacen("\"red\"", "\"blue\"", 1);
        assert!(matches!(Model::from_json(&tampered), Err(TrainError::Checkpoint(_))));
    }
}
