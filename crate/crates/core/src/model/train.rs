use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{gradients, EncodedBatch, EncodedPair, Weighting};
use super::{Model, ModelError, ParamSet, Vocab};
use crate::moe::{static_weights, TaskWeights};
use crate::normalizer::CanonicalText;
use crate::tasks::{TaskId, TaskPair};

/// Adam with bias correction; moment buffers follow [`ParamSet::tensors_mut`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &mut ParamSet, lr: f64) -> Self {
        let shapes: Vec<usize> = params.tensors_mut().iter().map(|t| t.len()).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Updates every tensor; the last `tail` tensors use the learning rate
    /// scaled by `tail_scale`, and are left untouched when it is zero.
    pub fn step(&mut self, params: &mut ParamSet, grad: &mut ParamSet, tail: usize, tail_scale: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut ps = params.tensors_mut();
        let gs = grad.tensors_mut();
        let head = ps.len() - tail;
        for (k, (p, g)) in ps.iter_mut().zip(gs).enumerate() {
            let lr = if k < head { self.lr } else { self.lr * tail_scale };
            if lr == 0.0 {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightingMode {
    Static { alphas: [f64; 3] },
    Moe { frozen: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub weighting: WeightingMode,
    /// Tasks that take part in training; T1 is required.
    pub tasks: Vec<TaskId>,
    /// Multiplier on the learning rate of gate parameters.
    pub gate_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            seed: 17,
            weighting: WeightingMode::Moe { frozen: false },
            tasks: TaskId::ALL.to_vec(),
            gate_lr_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub task_losses: [Option<f64>; 3],
    pub alphas: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean combined loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub log: Vec<StepLog>,
}

impl TrainReport {
    /// `step,alpha_t1,alpha_t2,alpha_t3,loss` lines with a header.
    pub fn alpha_csv(&self) -> String {
        let mut out = String::from("step,alpha_t1,alpha_t2,alpha_t3,loss\n");
        for s in &self.log {
            out.push_str(&format!("{},{},{},{},{}\n", s.step, s.alphas[0], s.alphas[1], s.alphas[2], s.loss));
        }
        out
    }
}

/// Vocabulary over the distinct texts of `pairs`.
pub fn vocab_for(pairs: &[TaskPair], min_freq: usize) -> Vocab {
    let texts: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.left.text(), p.right.text()]).collect();
    let texts: Vec<CanonicalText> = texts.into_iter().map(CanonicalText::from_canonical).collect();
    Vocab::build(&texts, min_freq)
}

/// Cycles through a task's pairs in reshuffled order.
struct Sampler {
    pairs: Vec<EncodedPair>,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(pairs: Vec<EncodedPair>, seed: u64, task: TaskId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(task.index() as u64 + 1);
        let order = (0..pairs.len()).collect();
        let mut s = Sampler {
            pairs,
            order,
            pos: 0,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn next_batch(&mut self, size: usize) -> Vec<EncodedPair> {
        let size = size.min(self.pairs.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.pairs[self.order[self.pos]].clone());
            self.pos += 1;
        }
        out
    }
}

/// Trains `model` in place. Each step draws one batch per active task; an
/// epoch is one pass over the T1 pairs.
pub fn train(
    model: &mut Model,
    pairs: &[TaskPair],
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainReport, ModelError> {
    let weighting = match &config.weighting {
        WeightingMode::Static { alphas } => Weighting::Static(static_weights(*alphas)?),
        WeightingMode::Moe { .. } => Weighting::Gated,
    };
    let gate_scale = match config.weighting {
        WeightingMode::Moe { frozen: false } => config.gate_lr_scale,
        _ => 0.0,
    };
    let gate_tensors = model.params.gate_tensor_count();

    let mut samplers: Vec<(TaskId, Sampler)> = Vec::new();
    for task in TaskId::ALL {
        if !config.tasks.contains(&task) {
            continue;
        }
        if let Weighting::Static(w) = weighting {
            if w.get(task) == 0.0 {
                continue;
            }
        }
        let encoded: Vec<EncodedPair> = pairs
            .iter()
            .filter(|p| p.task == task)
            .map(|p| EncodedPair::from_pair(&model.vocab, p))
            .collect();
        if encoded.is_empty() {
            if task == TaskId::T1 {
                return Err(ModelError::NoTrainingData);
            }
            continue;
        }
        samplers.push((task, Sampler::new(encoded, config.seed, task)));
    }
    let Some((_, t1)) = samplers.iter().find(|(t, _)| *t == TaskId::T1) else {
        return Err(ModelError::NoTrainingData);
    };
    let batch_size = config.batch_size.max(1);
    let steps_per_epoch = t1.pairs.len().div_ceil(batch_size);

    let mut adam = Adam::new(&mut model.params, config.lr);
    let mut report = TrainReport::default();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for _ in 0..steps_per_epoch {
            let batches: Vec<EncodedBatch> = samplers
                .iter_mut()
                .map(|(task, s)| EncodedBatch {
                    task: *task,
                    pairs: s.next_batch(batch_size),
                })
                .collect();
            let (stats, mut grad) = gradients(&model.params, &batches, weighting)?;
            adam.step(&mut model.params, &mut grad, gate_tensors, gate_scale);
            if !model.params.is_finite() {
                return Err(ModelError::NumericFailure(format!("parameters diverged at step {}", report.steps)));
            }
            total += stats.loss;
            let log = StepLog {
                epoch,
                step: report.steps,
                loss: stats.loss,
                task_losses: stats.task_losses,
                alphas: stats.weights.alphas(),
            };
            on_step(&log);
            report.log.push(log);
            report.steps += 1;
        }
        report.epoch_losses.push(total / steps_per_epoch as f64);
    }
    Ok(report)
}

/// Equal static weights, for comparisons against gating.
pub fn uniform_static() -> WeightingMode {
    WeightingMode::Static {
        alphas: TaskWeights::uniform().alphas(),
    }
}
