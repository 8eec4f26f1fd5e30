//! Bi-encoder pair scorer with one head per task.
//!
//! Texts are encoded independently; a task head scores the interaction
//! vector of two encodings. The training objective combines the per-task
//! binary cross-entropies with task weights that are either fixed or produced
//! by the gates in [`crate::moe`].

pub mod checkpoint;
pub mod encoder;
pub mod head;
pub mod nn;
pub mod objective;
pub mod train;
pub mod vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moe::{GateConfig, GateParams, MoeError};
use crate::normalizer::CanonicalText;
use crate::tasks::TaskId;

pub use checkpoint::{checkpoint_json, load_checkpoint, model_from_json, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use encoder::EncoderParams;
pub use head::{interaction, TaskHead};
pub use objective::{gradients, objective, task_loss, EncodedBatch, EncodedPair, StepStats, Weighting};
pub use train::{train, uniform_static, vocab_for, Adam, StepLog, TrainConfig, TrainReport, WeightingMode};
pub use vocab::{segment, Vocab, PAD, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty batch for task {0}")]
    EmptyBatch(TaskId),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error(transparent)]
    Moe(#[from] MoeError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no training pairs for task T1")]
    NoTrainingData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub min_freq: usize,
    pub seed: u64,
    /// Gate hidden widths; empty means `[4·dim, 2·dim]`.
    pub gate_hidden: Vec<usize>,
    pub shared_gate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            layers: 2,
            min_freq: 2,
            seed: 17,
            gate_hidden: Vec::new(),
            shared_gate: false,
        }
    }
}

impl ModelConfig {
    /// Width of a task feature, the interaction vector `[u; v; |u−v|; u⊙v]`.
    pub fn feature_dim(&self) -> usize {
        4 * self.dim
    }

    pub fn gate_config(&self) -> GateConfig {
        GateConfig {
            feature_dim: self.feature_dim(),
            hidden: self.gate_hidden.clone(),
            shared: self.shared_gate,
        }
    }
}

/// Every trainable tensor. Also used as the gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub encoder: EncoderParams,
    pub heads: Vec<TaskHead>,
    pub gates: GateParams,
}

/// A named view of one tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    pub shape: [usize; 2],
    pub data: &'a [f64],
}

impl ParamSet {
    pub fn new(config: &ModelConfig, vocab_size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = EncoderParams::new(vocab_size, config.dim, config.layers, &mut rng);
        let heads = TaskId::ALL.iter().map(|_| TaskHead::new(config.dim, &mut rng)).collect();
        let gates = GateParams::new(&config.gate_config(), &mut rng);
        ParamSet { encoder, heads, gates }
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            encoder: self.encoder.zeros_like(),
            heads: self.heads.iter().map(|h| TaskHead::zeros(h.dim())).collect(),
            gates: self.gates.zeros_like(),
        }
    }

    pub fn head(&self, task: TaskId) -> &TaskHead {
        &self.heads[task.index()]
    }

    /// All tensors in a fixed order, with stable names.
    pub fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::new();
        let e = &self.encoder;
        out.push((
            "encoder.embedding".to_string(),
            TensorRef {
                shape: [e.vocab_size, e.dim],
                data: &e.embedding[..],
            },
        ));
        for (l, layer) in e.layers.iter().enumerate() {
            push_dense(&mut out, &format!("encoder.layer{l}"), layer);
        }
        for (task, h) in TaskId::ALL.iter().zip(&self.heads) {
            let d = h.dim();
            let p = format!("head.{task}");
            out.push((format!("{p}.w_side"), TensorRef { shape: [1, d], data: &h.w_side }));
            out.push((format!("{p}.w_diff"), TensorRef { shape: [1, d], data: &h.w_diff }));
            out.push((format!("{p}.w_prod"), TensorRef { shape: [1, d], data: &h.w_prod }));
            out.push((
                format!("{p}.bias"),
                TensorRef {
                    shape: [1, 1],
                    data: std::slice::from_ref(&h.bias),
                },
            ));
        }
        for (g, net) in self.gates.networks().into_iter().enumerate() {
            for (l, layer) in net.layers.iter().enumerate() {
                push_dense(&mut out, &format!("gate{g}.layer{l}"), layer);
            }
        }
        out
    }

    /// Mutable slices in the order of [`ParamSet::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(&mut self.encoder.embedding[..]);
        for layer in &mut self.encoder.layers {
            out.push(&mut layer.w[..]);
            out.push(&mut layer.b[..]);
        }
        for h in &mut self.heads {
            out.push(&mut h.w_side[..]);
            out.push(&mut h.w_diff[..]);
            out.push(&mut h.w_prod[..]);
            out.push(std::slice::from_mut(&mut h.bias));
        }
        for net in self.gates.networks_mut() {
            for layer in &mut net.layers {
                out.push(&mut layer.w[..]);
                out.push(&mut layer.b[..]);
            }
        }
        out
    }

    pub fn gate_tensor_count(&self) -> usize {
        self.gates.networks().iter().map(|n| 2 * n.layers.len()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }
}

fn push_dense<'a>(out: &mut Vec<(String, TensorRef<'a>)>, prefix: &str, d: &'a nn::Dense) {
    out.push((
        format!("{prefix}.w"),
        TensorRef {
            shape: [d.rows, d.cols],
            data: &d.w,
        },
    ));
    out.push((
        format!("{prefix}.b"),
        TensorRef {
            shape: [1, d.rows],
            data: &d.b,
        },
    ));
}

/// Vocabulary, configuration and parameters of a trained scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Self {
        let params = ParamSet::new(&config, vocab.len());
        Model { config, vocab, params }
    }

    pub fn encode_text(&self, text: &CanonicalText) -> Vec<f64> {
        encode(&self.params.encoder, &self.vocab, text)
    }

    pub fn score_pair(&self, task: TaskId, left: &CanonicalText, right: &CanonicalText) -> f64 {
        score_pair(&self.params.encoder, &self.vocab, self.params.head(task), left, right)
    }

    /// Score of two precomputed encodings.
    pub fn score_encoded(&self, task: TaskId, u: &[f64], v: &[f64]) -> f64 {
        self.params.head(task).score(u, v)
    }
}

/// Mean-pooled encoding of `text`.
pub fn encode(params: &EncoderParams, vocab: &Vocab, text: &CanonicalText) -> Vec<f64> {
    params.encode_ids(&vocab.encode(text))
}

/// Probability that `left` and `right` are similar under `head`.
pub fn score_pair(
    params: &EncoderParams,
    vocab: &Vocab,
    head: &TaskHead,
    left: &CanonicalText,
    right: &CanonicalText,
) -> f64 {
    head.score(&encode(params, vocab, left), &encode(params, vocab, right))
}
