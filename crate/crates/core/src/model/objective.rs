//! Combined multi-task loss and its exact gradient.
//!
//! For task `i` with batch `Bᵢ`:
//! - `zₚ = headᵢ(xₚ)` with `xₚ = [u; v; |u−v|; u⊙v]`
//! - `Lᵢ = mean over Bᵢ of softplus(zₚ) − yₚ zₚ`
//! - `Fᵢ = mean over Bᵢ of xₚ`
//!
//! The objective is `Σ αᵢ Lᵢ`, with `α` fixed or `softmax(Gateᵢ(Fᵢ))`. In the
//! gated case the gradient also flows through `α` into the gates and the
//! features.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{pool, pooling_weights, EncoderParams, TokenTrace};
use super::head::{interaction, interaction_backward};
use super::nn::{axpy, sigmoid, softplus, Dense};
use super::{ModelError, ParamSet, Vocab};
use crate::moe::{combined_loss, combined_loss_logit_grad, TaskWeights};
use crate::tasks::{TaskBatch, TaskId, TaskPair};

/// A task pair as token ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub label: f64,
}

impl EncodedPair {
    pub fn from_pair(vocab: &Vocab, p: &TaskPair) -> Self {
        EncodedPair {
            left: vocab.encode(&p.left),
            right: vocab.encode(&p.right),
            label: p.label.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub task: TaskId,
    pub pairs: Vec<EncodedPair>,
}

impl EncodedBatch {
    pub fn from_batch(vocab: &Vocab, batch: &TaskBatch) -> Self {
        EncodedBatch {
            task: batch.task(),
            pairs: batch.pairs().iter().map(|p| EncodedPair::from_pair(vocab, p)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// Fixed coefficients, renormalized over the tasks present in the step.
    Static(TaskWeights),
    /// Coefficients from the gate networks.
    Gated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: f64,
    pub task_losses: [Option<f64>; 3],
    pub weights: TaskWeights,
    pub logits: [Option<f64>; 3],
}

struct PairCache {
    left: Vec<(u32, f64)>,
    right: Vec<(u32, f64)>,
    u: Vec<f64>,
    v: Vec<f64>,
    x: Vec<f64>,
    z: f64,
}

struct Forward {
    traces: BTreeMap<u32, TokenTrace>,
    pairs: Vec<Vec<PairCache>>,
    losses: [Option<f64>; 3],
    features: [Option<Vec<f64>>; 3],
}

fn forward(encoder: &EncoderParams, params: &ParamSet, batches: &[EncodedBatch]) -> Result<Forward, ModelError> {
    let mut seen = [false; 3];
    for b in batches {
        if b.pairs.is_empty() {
            return Err(ModelError::EmptyBatch(b.task));
        }
        if std::mem::replace(&mut seen[b.task.index()], true) {
            return Err(ModelError::NumericFailure(format!("task {} appears twice in one step", b.task)));
        }
    }
    let tokens: BTreeSet<u32> = batches
        .iter()
        .flat_map(|b| &b.pairs)
        .flat_map(|p| pooling_weights(&p.left).into_iter().chain(pooling_weights(&p.right)))
        .map(|(t, _)| t)
        .collect();
    let tokens: Vec<u32> = tokens.into_iter().collect();
    let traces: BTreeMap<u32, TokenTrace> = tokens
        .par_iter()
        .map(|&t| (t, encoder.forward_token(t)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let d = encoder.dim;
    let mut losses = [None; 3];
    let mut features: [Option<Vec<f64>>; 3] = [None, None, None];
    let mut pairs = Vec::with_capacity(batches.len());
    for b in batches {
        let head = params.head(b.task);
        let n = b.pairs.len() as f64;
        let mut loss = 0.0;
        let mut feat = vec![0.0; 4 * d];
        let mut cache = Vec::with_capacity(b.pairs.len());
        for p in &b.pairs {
            let left = pooling_weights(&p.left);
            let right = pooling_weights(&p.right);
            let u = pool(&left, &traces, d);
            let v = pool(&right, &traces, d);
            let x = interaction(&u, &v);
            let z = head.logit(&u, &v);
            loss += softplus(z) - p.label * z;
            axpy(1.0 / n, &x, &mut feat);
            cache.push(PairCache { left, right, u, v, x, z });
        }
        losses[b.task.index()] = Some(loss / n);
        features[b.task.index()] = Some(feat);
        pairs.push(cache);
    }
    Ok(Forward {
        traces,
        pairs,
        losses,
        features,
    })
}

/// Task weights, gate logits, and the gate trace when gated.
type Weights = (TaskWeights, [Option<f64>; 3], Option<crate::moe::GateOutput>);

/// Encoder layer gradients and per-token embedding gradients of one chunk.
type ChunkGrad = (Vec<Dense>, Vec<(u32, Vec<f64>)>);

fn weights_for(
    params: &ParamSet,
    fwd: &Forward,
    weighting: Weighting,
) -> Result<Weights, ModelError> {
    let active = fwd.losses.map(|l| l.is_some());
    match weighting {
        Weighting::Static(w) => Ok((w.restrict(active)?, [None; 3], None)),
        Weighting::Gated => {
            let feats = [0, 1, 2].map(|i| fwd.features[i].as_deref());
            let out = params.gates.forward(feats)?;
            Ok((out.weights, out.logits, Some(out)))
        }
    }
}

fn stats_of(fwd: &Forward, weights: TaskWeights, logits: [Option<f64>; 3]) -> Result<StepStats, ModelError> {
    let loss = combined_loss(fwd.losses.map(|l| l.unwrap_or(0.0)), &weights);
    if !loss.is_finite() {
        return Err(ModelError::NumericFailure(format!("loss is {loss}")));
    }
    Ok(StepStats {
        loss,
        task_losses: fwd.losses,
        weights,
        logits,
    })
}

/// Value of the combined objective.
pub fn objective(params: &ParamSet, batches: &[EncodedBatch], weighting: Weighting) -> Result<StepStats, ModelError> {
    let fwd = forward(&params.encoder, params, batches)?;
    let (weights, logits, _) = weights_for(params, &fwd, weighting)?;
    stats_of(&fwd, weights, logits)
}

/// Mean binary cross-entropy of one batch and its task feature.
pub fn task_loss(params: &ParamSet, batch: &EncodedBatch) -> Result<(f64, Vec<f64>), ModelError> {
    let fwd = forward(&params.encoder, params, std::slice::from_ref(batch))?;
    let i = batch.task.index();
    Ok((fwd.losses[i].unwrap(), fwd.features[i].clone().unwrap()))
}

/// Value and exact gradient of the combined objective.
pub fn gradients(
    params: &ParamSet,
    batches: &[EncodedBatch],
    weighting: Weighting,
) -> Result<(StepStats, ParamSet), ModelError> {
    let encoder = &params.encoder;
    let fwd = forward(encoder, params, batches)?;
    let (weights, logits, gate_out) = weights_for(params, &fwd, weighting)?;
    let stats = stats_of(&fwd, weights, logits)?;
    let mut grad = params.zeros_like();

    // gradient reaching each task feature through the weights
    let mut dfeat: [Option<Vec<f64>>; 3] = [None, None, None];
    if let Some(out) = &gate_out {
        let dlogits = combined_loss_logit_grad(fwd.losses.map(|l| l.unwrap_or(0.0)), &weights);
        dfeat = params.gates.backward(out, dlogits, &mut grad.gates);
    }

    let d = encoder.dim;
    let mut token_grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (b, cache) in batches.iter().zip(&fwd.pairs) {
        let i = b.task.index();
        let alpha = weights.alphas()[i];
        let n = b.pairs.len() as f64;
        let head = params.head(b.task);
        let w = head.interaction_weights();
        let df = dfeat[i].as_deref();
        if alpha == 0.0 && df.is_none() {
            continue;
        }
        for (p, c) in b.pairs.iter().zip(cache) {
            let gz = alpha * (sigmoid(c.z) - p.label) / n;
            head.accumulate(&c.x, gz, &mut grad.heads[i]);
            let mut dx: Vec<f64> = w.iter().map(|wk| gz * wk).collect();
            if let Some(df) = df {
                axpy(1.0 / n, df, &mut dx);
            }
            let (du, dv) = interaction_backward(&c.u, &c.v, &dx);
            for (side, dside) in [(&c.left, &du), (&c.right, &dv)] {
                for &(t, wt) in side.iter() {
                    let g = token_grads.entry(t).or_insert_with(|| vec![0.0; d]);
                    axpy(wt, dside, g);
                }
            }
        }
    }

    // per-token backward in fixed-size chunks, reduced in token order
    let items: Vec<(&u32, &Vec<f64>)> = token_grads.iter().collect();
    let partials: Vec<ChunkGrad> = items
        .par_chunks(TOKEN_CHUNK)
        .map(|chunk| {
            let mut layers: Vec<Dense> = encoder.layers.iter().map(Dense::zeros_like).collect();
            let rows = chunk
                .iter()
                .map(|(&t, g)| (t, encoder.backward_token(&fwd.traces[&t], g, &mut layers)))
                .collect();
            (layers, rows)
        })
        .collect();
    for (layers, rows) in partials {
        for (gl, ll) in grad.encoder.layers.iter_mut().zip(&layers) {
            axpy(1.0, &ll.w, &mut gl.w);
            axpy(1.0, &ll.b, &mut gl.b);
        }
        for (t, row) in rows {
            axpy(1.0, &row, grad.encoder.row_mut(t));
        }
    }
    Ok((stats, grad))
}

const TOKEN_CHUNK: usize = 32;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::moe::static_weights;

    fn params(dim: usize, vocab: usize) -> ParamSet {
        ParamSet::new(
            &ModelConfig {
                dim,
                layers: 2,
                seed: 3,
                ..ModelConfig::default()
            },
            vocab,
        )
    }

    fn pair(l: &[u32], r: &[u32], y: f64) -> EncodedPair {
        EncodedPair {
            left: l.to_vec(),
            right: r.to_vec(),
            label: y,
        }
    }

    #[test]
    fn zero_head_loss_is_ln2() {
        let mut p = params(3, 5);
        p.heads[0] = crate::model::TaskHead::zeros(3);
        let b = EncodedBatch {
            task: TaskId::T1,
            pairs: vec![pair(&[2], &[3], 1.0)],
        };
        let (l, f) = task_loss(&p, &b).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(f.len(), 12);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = params(3, 5);
        let b = EncodedBatch {
            task: TaskId::T2,
            pairs: vec![],
        };
        assert!(matches!(task_loss(&p, &b), Err(ModelError::EmptyBatch(TaskId::T2))));
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let p = params(3, 6);
        let one = vec![pair(&[2, 3], &[4], 1.0), pair(&[5], &[2, 2], 0.0)];
        let two: Vec<EncodedPair> = one.iter().chain(&one).cloned().collect();
        let w = Weighting::Static(static_weights([1.0, 0.0, 0.0]).unwrap());
        let (s1, g1) = gradients(&p, &[EncodedBatch { task: TaskId::T1, pairs: one }], w).unwrap();
        let (s2, g2) = gradients(&p, &[EncodedBatch { task: TaskId::T1, pairs: two }], w).unwrap();
        assert!((s1.loss - s2.loss).abs() < 1e-15);
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors().iter()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_weight_task_contributes_no_head_gradient() {
        let p = params(3, 6);
        let batches = [
            EncodedBatch {
                task: TaskId::T1,
                pairs: vec![pair(&[2], &[3], 1.0)],
            },
            EncodedBatch {
                task: TaskId::T2,
                pairs: vec![pair(&[4], &[5], 0.0)],
            },
        ];
        let w = Weighting::Static(static_weights([1.0, 0.0, 0.0]).unwrap());
        let (_, g) = gradients(&p, &batches, w).unwrap();
        assert!(g.heads[1].w_side.iter().all(|v| *v == 0.0));
        assert_eq!(g.heads[1].bias, 0.0);
        // tokens only seen by the zero-weight task get no gradient
        assert!(g.encoder.row(4).iter().all(|v| *v == 0.0));
    }
}
