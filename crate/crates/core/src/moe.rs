//! Gated task weighting.
//!
//! Each task's pooled feature goes through its own gate network to a scalar
//! logit; a softmax over the tasks present in the step turns the logits into
//! the task coefficients. The combined loss is `Σ αᵢ Lᵢ`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::nn::{Mlp, MlpTrace};
use crate::tasks::TaskId;

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoeError {
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("task weights {0:?} are not a point of the probability simplex")]
    InvalidSimplexPoint([f64; 3]),
    #[error("no task is active")]
    NoActiveTask,
    #[error("non-finite gate feature")]
    NonFinite,
}

/// Coefficients `α` with `αᵢ ≥ 0` and `Σα = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct TaskWeights([f64; 3]);

impl TaskWeights {
    pub fn new(alphas: [f64; 3]) -> Result<Self, MoeError> {
        let ok = alphas.iter().all(|a| a.is_finite() && *a >= 0.0)
            && (alphas.iter().sum::<f64>() - 1.0).abs() < SIMPLEX_TOLERANCE;
        if ok {
            Ok(TaskWeights(alphas))
        } else {
            Err(MoeError::InvalidSimplexPoint(alphas))
        }
    }

    pub fn uniform() -> Self {
        TaskWeights([1.0 / 3.0; 3])
    }

    pub fn alphas(&self) -> [f64; 3] {
        self.0
    }

    pub fn get(&self, task: TaskId) -> f64 {
        self.0[task.index()]
    }

    /// Zeroes inactive tasks and rescales the rest to sum to one.
    pub fn restrict(&self, active: [bool; 3]) -> Result<Self, MoeError> {
        let mut a = self.0;
        for (ai, on) in a.iter_mut().zip(active) {
            if !on {
                *ai = 0.0;
            }
        }
        let s: f64 = a.iter().sum();
        if s <= 0.0 {
            return Err(MoeError::NoActiveTask);
        }
        a.iter_mut().for_each(|x| *x /= s);
        Ok(TaskWeights(a))
    }
}

impl TryFrom<[f64; 3]> for TaskWeights {
    type Error = MoeError;
    fn try_from(a: [f64; 3]) -> Result<Self, MoeError> {
        TaskWeights::new(a)
    }
}

impl From<TaskWeights> for [f64; 3] {
    fn from(w: TaskWeights) -> Self {
        w.0
    }
}

/// Fixed coefficients without gate networks.
pub fn static_weights(alphas: [f64; 3]) -> Result<TaskWeights, MoeError> {
    TaskWeights::new(alphas)
}

/// `Σ αᵢ Lᵢ`. Tasks with zero weight contribute nothing, even if their loss
/// is not finite.
pub fn combined_loss(losses: [f64; 3], weights: &TaskWeights) -> f64 {
    losses
        .iter()
        .zip(weights.0)
        .filter(|(_, a)| *a != 0.0)
        .map(|(l, a)| a * l)
        .sum()
}

/// Softmax over the present logits; absent tasks get weight zero.
pub fn softmax_active(logits: [Option<f64>; 3]) -> Result<TaskWeights, MoeError> {
    let max = logits
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(MoeError::NoActiveTask);
    }
    let mut a = [0.0; 3];
    for (ai, l) in a.iter_mut().zip(logits) {
        if let Some(l) = l {
            *ai = (l - max).exp();
        }
    }
    let s: f64 = a.iter().sum();
    a.iter_mut().for_each(|x| *x /= s);
    Ok(TaskWeights(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub feature_dim: usize,
    /// Hidden widths; the output layer is added. Empty means `[d_f, d_f/2]`.
    pub hidden: Vec<usize>,
    /// One network over the concatenated features with three outputs.
    pub shared: bool,
}

impl GateConfig {
    pub fn hidden_sizes(&self) -> Vec<usize> {
        if self.hidden.is_empty() {
            vec![self.feature_dim, (self.feature_dim / 2).max(1)]
        } else {
            self.hidden.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateParams {
    PerTask { gates: Vec<Mlp> },
    Shared { net: Mlp },
}

/// Logits, weights and activations of one gate evaluation.
#[derive(Debug, Clone)]
pub struct GateOutput {
    pub logits: [Option<f64>; 3],
    pub weights: TaskWeights,
    traces: Vec<Option<MlpTrace>>,
}

impl GateParams {
    /// Output layers start at zero, so fresh gates give equal weights.
    pub fn new<R: Rng + ?Sized>(config: &GateConfig, rng: &mut R) -> Self {
        let hidden = config.hidden_sizes();
        if config.shared {
            let mut sizes = vec![3 * config.feature_dim];
            sizes.extend(&hidden);
            sizes.push(3);
            GateParams::Shared {
                net: Mlp::new(&sizes, rng),
            }
        } else {
            let mut sizes = vec![config.feature_dim];
            sizes.extend(&hidden);
            sizes.push(1);
            GateParams::PerTask {
                gates: (0..3).map(|_| Mlp::new(&sizes, rng)).collect(),
            }
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            GateParams::PerTask { gates } => gates[0].input_dim(),
            GateParams::Shared { net } => net.input_dim() / 3,
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            GateParams::PerTask { gates } => GateParams::PerTask {
                gates: gates.iter().map(Mlp::zeros_like).collect(),
            },
            GateParams::Shared { net } => GateParams::Shared { net: net.zeros_like() },
        }
    }

    pub fn networks(&self) -> Vec<&Mlp> {
        match self {
            GateParams::PerTask { gates } => gates.iter().collect(),
            GateParams::Shared { net } => vec![net],
        }
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        match self {
            GateParams::PerTask { gates } => gates.iter_mut().collect(),
            GateParams::Shared { net } => vec![net],
        }
    }

    /// Evaluates the gates on the features of the active tasks.
    pub fn forward(&self, features: [Option<&[f64]>; 3]) -> Result<GateOutput, MoeError> {
        let d = self.feature_dim();
        for f in features.iter().flatten() {
            if f.len() != d {
                return Err(MoeError::DimensionMismatch {
                    expected: d,
                    found: f.len(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(MoeError::NonFinite);
            }
        }
        let (logits, traces) = match self {
            GateParams::PerTask { gates } => {
                let mut logits = [None; 3];
                let mut traces = vec![None, None, None];
                for i in 0..3 {
                    if let Some(f) = features[i] {
                        let (y, t) = gates[i].forward(f);
                        logits[i] = Some(y[0]);
                        traces[i] = Some(t);
                    }
                }
                (logits, traces)
            }
            GateParams::Shared { net } => {
                let mut x = vec![0.0; 3 * d];
                for (i, f) in features.iter().enumerate() {
                    if let Some(f) = f {
                        x[i * d..(i + 1) * d].copy_from_slice(f);
                    }
                }
                let (y, t) = net.forward(&x);
                let mut logits = [None; 3];
                for i in 0..3 {
                    if features[i].is_some() {
                        logits[i] = Some(y[i]);
                    }
                }
                (logits, vec![Some(t)])
            }
        };
        Ok(GateOutput {
            logits,
            weights: softmax_active(logits)?,
            traces,
        })
    }

    /// Backpropagates `dlogits` through the gates. Returns `dL/dFeature` per
    /// active task.
    pub fn backward(&self, out: &GateOutput, dlogits: [f64; 3], grad: &mut GateParams) -> [Option<Vec<f64>>; 3] {
        let mut dfeat: [Option<Vec<f64>>; 3] = [None, None, None];
        match (self, grad) {
            (GateParams::PerTask { gates }, GateParams::PerTask { gates: ggrad }) => {
                for i in 0..3 {
                    if let Some(trace) = &out.traces[i] {
                        dfeat[i] = Some(gates[i].backward(trace, &[dlogits[i]], &mut ggrad[i]));
                    }
                }
            }
            (GateParams::Shared { net }, GateParams::Shared { net: gnet }) => {
                let trace = out.traces[0].as_ref().expect("shared gate trace");
                let mut dy = [0.0; 3];
                for i in 0..3 {
                    if out.logits[i].is_some() {
                        dy[i] = dlogits[i];
                    }
                }
                let dx = net.backward(trace, &dy, gnet);
                let d = self.feature_dim();
                for i in 0..3 {
                    if out.logits[i].is_some() {
                        dfeat[i] = Some(dx[i * d..(i + 1) * d].to_vec());
                    }
                }
            }
            _ => panic!("gradient buffer does not match gate layout"),
        }
        dfeat
    }
}

/// Computes task weights from three features of equal dimension.
pub fn gate_forward(gates: &GateParams, features: [&[f64]; 3]) -> Result<TaskWeights, MoeError> {
    for f in &features[1..] {
        if f.len() != features[0].len() {
            return Err(MoeError::DimensionMismatch {
                expected: features[0].len(),
                found: f.len(),
            });
        }
    }
    Ok(gates.forward(features.map(Some))?.weights)
}

/// `∂(Σ αⱼ Lⱼ)/∂ℓᵢ = αᵢ (Lᵢ − Σ αⱼ Lⱼ)` for a softmax over logits `ℓ`.
pub fn combined_loss_logit_grad(losses: [f64; 3], weights: &TaskWeights) -> [f64; 3] {
    let total = combined_loss(losses, weights);
    let a = weights.alphas();
    let mut g = [0.0; 3];
    for i in 0..3 {
        if a[i] != 0.0 {
            g[i] = a[i] * (losses[i] - total);
        }
    }
    g
}
