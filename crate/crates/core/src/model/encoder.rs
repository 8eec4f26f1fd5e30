use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{axpy, Dense};
use super::vocab::{PAD, UNK};

/// Token embeddings followed by residual tanh layers applied per position:
/// `h ← h + tanh(W h + b)`. A text is the mean of its token outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub dim: usize,
    pub vocab_size: usize,
    /// `vocab_size × dim`, row-major.
    pub embedding: Vec<f64>,
    pub layers: Vec<Dense>,
}

/// Activations of one token through the layer stack.
#[derive(Debug, Clone)]
pub struct TokenTrace {
    /// `hs[l]` is the input of layer `l`; the last entry is the output.
    pub hs: Vec<Vec<f64>>,
    /// `tanh` outputs of each layer.
    pub ts: Vec<Vec<f64>>,
}

impl TokenTrace {
    pub fn output(&self) -> &[f64] {
        self.hs.last().unwrap()
    }
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, dim: usize, layers: usize, rng: &mut R) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let mut embedding: Vec<f64> = (0..vocab_size * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        // PAD never contributes; keep its row at zero
        let pad_row = dim.min(embedding.len());
        embedding[..pad_row].iter_mut().for_each(|v| *v = 0.0);
        let scale = 0.5 / (dim as f64).sqrt();
        EncoderParams {
            dim,
            vocab_size,
            embedding,
            layers: (0..layers).map(|_| Dense::uniform(dim, dim, scale, rng)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            dim: self.dim,
            vocab_size: self.vocab_size,
            embedding: vec![0.0; self.embedding.len()],
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn row(&self, token: u32) -> &[f64] {
        let t = (token as usize).min(self.vocab_size - 1);
        &self.embedding[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, token: u32) -> &mut [f64] {
        let t = token as usize;
        &mut self.embedding[t * self.dim..(t + 1) * self.dim]
    }

    pub fn forward_token(&self, token: u32) -> TokenTrace {
        let mut hs = Vec::with_capacity(self.layers.len() + 1);
        let mut ts = Vec::with_capacity(self.layers.len());
        let mut h = self.row(token).to_vec();
        for layer in &self.layers {
            let t: Vec<f64> = layer.forward(&h).into_iter().map(f64::tanh).collect();
            let next: Vec<f64> = h.iter().zip(&t).map(|(a, b)| a + b).collect();
            hs.push(std::mem::replace(&mut h, next));
            ts.push(t);
        }
        hs.push(h);
        TokenTrace { hs, ts }
    }

    /// Backpropagates the gradient `g` of one token's output. Layer gradients
    /// are accumulated into `layer_grads`; the embedding-row gradient is
    /// returned.
    pub fn backward_token(&self, trace: &TokenTrace, g: &[f64], layer_grads: &mut [Dense]) -> Vec<f64> {
        let mut g = g.to_vec();
        for l in (0..self.layers.len()).rev() {
            let da: Vec<f64> = g.iter().zip(&trace.ts[l]).map(|(gi, t)| gi * (1.0 - t * t)).collect();
            let dh = self.layers[l].backward(&trace.hs[l], &da, &mut layer_grads[l]);
            axpy(1.0, &dh, &mut g);
        }
        g
    }

    /// Output of every token in `tokens`, keyed by id.
    pub fn forward_tokens(&self, tokens: impl IntoIterator<Item = u32>) -> BTreeMap<u32, TokenTrace> {
        tokens.into_iter().map(|t| (t, self.forward_token(t))).collect()
    }

    pub fn encode_ids(&self, ids: &[u32]) -> Vec<f64> {
        let counts = pooling_weights(ids);
        let mut u = vec![0.0; self.dim];
        for (t, w) in counts {
            axpy(w, self.forward_token(t).output(), &mut u);
        }
        u
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.iter().all(|v| v.is_finite()) && self.layers.iter().all(Dense::is_finite)
    }
}

/// Pooling weight of each distinct non-PAD token: its count over the number
/// of non-PAD positions. A text with no such token pools a single UNK.
pub fn pooling_weights(ids: &[u32]) -> Vec<(u32, f64)> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &t in ids {
        if t != PAD {
            *counts.entry(t).or_default() += 1;
        }
    }
    let n: usize = counts.values().sum();
    if n == 0 {
        return vec![(UNK, 1.0)];
    }
    counts.into_iter().map(|(t, c)| (t, c as f64 / n as f64)).collect()
}

/// Mean of token outputs under `weights`, reading from precomputed traces.
pub fn pool(weights: &[(u32, f64)], traces: &BTreeMap<u32, TokenTrace>, dim: usize) -> Vec<f64> {
    let mut u = vec![0.0; dim];
    for (t, w) in weights {
        axpy(*w, traces[t].output(), &mut u);
    }
    u
}
