//! Dense layers and small vector helpers shared by the encoder and the gates.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// `y = W x + b` with `W` stored row-major as `rows × cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    /// Uniform in `±scale`, biases zero.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let mut d = Dense::zeros(rows, cols);
        if scale > 0.0 {
            for w in &mut d.w {
                *w = rng.gen_range(-scale..scale);
            }
        }
        d
    }

    /// Glorot-uniform initialisation.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let scale = (6.0 / (rows + cols) as f64).sqrt();
        Dense::uniform(rows, cols, scale, rng)
    }

    pub fn zeros_like(&self) -> Self {
        Dense::zeros(self.rows, self.cols)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = self.b.clone();
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += dot(&self.w[r * self.cols..(r + 1) * self.cols], x);
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.cols];
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[r] += g;
            let row = r * self.cols;
            axpy(g, x, &mut grad.w[row..row + self.cols]);
            axpy(g, &self.w[row..row + self.cols], &mut dx);
        }
        dx
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).all(|v| v.is_finite())
    }
}

/// A stack of dense layers with tanh between them and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// Sizes `[in, h1, ..., out]`. Hidden layers are Glorot-initialised and
    /// the output layer starts at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                if i + 1 == n {
                    Dense::zeros(sizes[i + 1], sizes[i])
                } else {
                    Dense::glorot(sizes[i + 1], sizes[i], rng)
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpTrace) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        (h, MlpTrace { inputs })
    }

    pub fn backward(&self, trace: &MlpTrace, dy: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let mut g = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            g = self.layers[i].backward(&trace.inputs[i], &g, &mut grad.layers[i]);
            if i > 0 {
                // trace.inputs[i] = tanh(pre-activation of layer i - 1)
                for (gj, hj) in g.iter_mut().zip(&trace.inputs[i]) {
                    *gj *= 1.0 - hj * hj;
                }
            }
        }
        g
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_by_hand() {
        let d = Dense {
            rows: 2,
            cols: 2,
            w: vec![1.0, 2.0, 3.0, 4.0],
            b: vec![0.5, -0.5],
        };
        assert_eq!(d.forward(&[1.0, -1.0]), vec![-0.5, -1.5]);
    }

    #[test]
    fn mlp_backward_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mlp = Mlp::new(&[3, 4, 2, 1], &mut rng);
        mlp.layers[2] = Dense::glorot(1, 2, &mut rng);
        let x = [0.3, -0.2, 0.9];
        let (_, trace) = mlp.forward(&x);
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&trace, &[1.0], &mut grad);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let num = (mlp.forward(&xp).0[0] - mlp.forward(&xm).0[0]) / (2.0 * h);
            assert!((num - dx[i]).abs() < 1e-8, "{num} vs {}", dx[i]);
        }
    }

    #[test]
    fn stable_logistic() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
    }
}
