use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{dot, sigmoid};

/// `[u; v; |u−v|; u⊙v]`
pub fn interaction(u: &[f64], v: &[f64]) -> Vec<f64> {
    let d = u.len();
    let mut x = Vec::with_capacity(4 * d);
    x.extend_from_slice(u);
    x.extend_from_slice(v);
    x.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs()));
    x.extend(u.iter().zip(v).map(|(a, b)| a * b));
    x
}

/// Affine scorer over the interaction vector. The `u` and `v` blocks share
/// one weight vector, so the logit is exactly symmetric in its arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    /// Weight of both the `u` and the `v` block.
    pub w_side: Vec<f64>,
    pub w_diff: Vec<f64>,
    pub w_prod: Vec<f64>,
    pub bias: f64,
}

impl TaskHead {
    pub fn zeros(dim: usize) -> Self {
        TaskHead {
            w_side: vec![0.0; dim],
            w_diff: vec![0.0; dim],
            w_prod: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let s = 0.1 / (dim as f64).sqrt();
        let mut h = TaskHead::zeros(dim);
        for w in h.w_side.iter_mut().chain(&mut h.w_diff).chain(&mut h.w_prod) {
            *w = rng.gen_range(-s..s);
        }
        h
    }

    pub fn dim(&self) -> usize {
        self.w_side.len()
    }

    /// Weight applied to each coordinate of the interaction vector.
    pub fn interaction_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(4 * self.dim());
        w.extend_from_slice(&self.w_side);
        w.extend_from_slice(&self.w_side);
        w.extend_from_slice(&self.w_diff);
        w.extend_from_slice(&self.w_prod);
        w
    }

    pub fn logit(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.dim();
        let mut z = self.bias;
        for i in 0..d {
            z += self.w_side[i] * (u[i] + v[i]) + self.w_diff[i] * (u[i] - v[i]).abs() + self.w_prod[i] * (u[i] * v[i]);
        }
        z
    }

    pub fn logit_of_interaction(&self, x: &[f64]) -> f64 {
        dot(&self.interaction_weights(), x) + self.bias
    }

    pub fn score(&self, u: &[f64], v: &[f64]) -> f64 {
        sigmoid(self.logit(u, v))
    }

    /// Accumulates `g · ∂z/∂θ` into `grad`, where `x` is the interaction.
    pub fn accumulate(&self, x: &[f64], g: f64, grad: &mut TaskHead) {
        let d = self.dim();
        for i in 0..d {
            grad.w_side[i] += g * (x[i] + x[d + i]);
            grad.w_diff[i] += g * x[2 * d + i];
            grad.w_prod[i] += g * x[3 * d + i];
        }
        grad.bias += g;
    }

    pub fn is_finite(&self) -> bool {
        self.w_side.iter().chain(&self.w_diff).chain(&self.w_prod).all(|v| v.is_finite()) && self.bias.is_finite()
    }
}

/// Maps `dL/dx` on the interaction vector back to `(dL/du, dL/dv)`.
pub fn interaction_backward(u: &[f64], v: &[f64], dx: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = u.len();
    let mut du = dx[..d].to_vec();
    let mut dv = dx[d..2 * d].to_vec();
    for i in 0..d {
        // the derivative of |t| at t = 0 is taken as 0
        let s = match u[i].partial_cmp(&v[i]) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => -1.0,
            _ => 0.0,
        };
        du[i] += s * dx[2 * d + i] + v[i] * dx[3 * d + i];
        dv[i] += -s * dx[2 * d + i] + u[i] * dx[3 * d + i];
    }
    (du, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_scores_one_half() {
        let h = TaskHead::zeros(3);
        assert_eq!(h.score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.5);
    }

    #[test]
    fn two_dim_by_hand() {
        let h = TaskHead {
            w_side: vec![0.5, -0.25],
            w_diff: vec![1.0, 0.0],
            w_prod: vec![0.0, 2.0],
            bias: -0.1,
        };
        let (u, v) = ([0.2, 0.4], [0.6, -0.2]);
        // 0.5*0.8 - 0.25*0.2 + 1.0*0.4 + 2.0*(-0.08) - 0.1 = 0.49
        assert!((h.logit(&u, &v) - 0.49).abs() < 1e-15);
        assert!((h.logit_of_interaction(&interaction(&u, &v)) - 0.49).abs() < 1e-15);
        assert!((h.score(&u, &v) - 1.0 / (1.0 + (-0.49f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn symmetric() {
        let h = TaskHead {
            w_side: vec![0.3, 0.1],
            w_diff: vec![-0.7, 0.2],
            w_prod: vec![1.1, -0.4],
            bias: 0.05,
        };
        let (u, v) = ([0.123, -4.5], [7.25, 0.001]);
        assert_eq!(h.logit(&u, &v), h.logit(&v, &u));
    }
}
