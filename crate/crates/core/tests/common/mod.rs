//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use fse::model::{objective, EncodedBatch, EncodedPair, ModelConfig, ParamSet, Weighting};
use fse::tasks::TaskId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random LaTeX formula drawn from a small grammar with presentation noise.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize) -> String {
    let n = rng.gen_range(1..=4);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(["+", "-", "=", r"\cdot ", "", " ", r"\text{-}", r"\,"][rng.gen_range(0..8)]);
        }
        out.push_str(&random_atom(rng, depth));
    }
    out
}

fn random_atom<R: Rng>(rng: &mut R, depth: usize) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return match rng.gen_range(0..7) {
            0 => rng.gen_range(0..200).to_string(),
            1 => ["x", "y", "a", "b", "n"][rng.gen_range(0..5)].to_string(),
            2 => format!(r"\mathrm{{{}}}", ["x", "y", "m"][rng.gen_range(0..3)]),
            3 => format!(r"\text{{{}}}", ["-", "1", " cm", "+"][rng.gen_range(0..4)]),
            4 => [r"\alpha", r"\pi", r"\theta"][rng.gen_range(0..3)].to_string(),
            5 => format!(r"{}.{}", rng.gen_range(0..10), rng.gen_range(0..10)),
            _ => format!(r"\textit{{{}}}", ["k", "ab"][rng.gen_range(0..2)]),
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..9) {
        0 => format!(r"\sqrt{{{}}}", random_formula(rng, d)),
        1 => format!(r"\sqrt[{}]{{{}}}", random_formula(rng, d), random_formula(rng, d)),
        2 => format!(r"\frac{{{}}}{{{}}}", random_formula(rng, d), random_formula(rng, d)),
        3 => format!("({})", random_formula(rng, d)),
        4 => format!(r"\left({}\right)", random_formula(rng, d)),
        5 => format!("{}^{{{}}}", random_atom(rng, 0), random_formula(rng, d)),
        6 => format!("{}_{}", random_atom(rng, 0), rng.gen_range(0..10)),
        7 => format!("{{{}}}", random_formula(rng, d)),
        _ => format!(r"\mathbf{{{}}}", random_formula(rng, d)),
    }
}

/// Relative error `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of the objective with respect to every parameter,
/// tensor by tensor.
pub fn numeric_gradient(params: &ParamSet, batches: &[EncodedBatch], weighting: Weighting, h: f64) -> Vec<Vec<f64>> {
    let mut work = params.clone();
    let lens: Vec<usize> = work.tensors_mut().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(lens.len());
    for (k, &len) in lens.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work.tensors_mut()[k][i];
            work.tensors_mut()[k][i] = orig + h;
            let fp = objective(&work, batches, weighting).unwrap().loss;
            work.tensors_mut()[k][i] = orig - h;
            let fm = objective(&work, batches, weighting).unwrap().loss;
            work.tensors_mut()[k][i] = orig;
            *gi = (fp - fm) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Random parameters with every tensor, gate output layers included, drawn
/// from `±scale`.
pub fn random_params(seed: u64, dim: usize, vocab: usize, shared_gate: bool) -> ParamSet {
    let cfg = ModelConfig {
        dim,
        layers: 2,
        seed,
        gate_hidden: vec![6, 3],
        shared_gate,
        ..ModelConfig::default()
    };
    let mut p = ParamSet::new(&cfg, vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    p
}

/// One small batch per task with random token ids in `2..vocab`.
pub fn random_batches(seed: u64, vocab: usize, pairs_per_task: usize) -> Vec<EncodedBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let text = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        let n = rng.gen_range(1..=5);
        (0..n).map(|_| rng.gen_range(2..vocab as u32)).collect()
    };
    TaskId::ALL
        .into_iter()
        .map(|task| EncodedBatch {
            task,
            pairs: (0..pairs_per_task)
                .map(|_| EncodedPair {
                    left: text(&mut rng),
                    right: text(&mut rng),
                    label: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
                })
                .collect(),
        })
        .collect()
}

/// Confident joint in exact integer arithmetic for records whose
/// `p(similar)` is `quarters[k] / 4`. `None` when a class has no records.
///
/// `pⱼ ≥ tⱼ` is checked as `pⱼ·nⱼ ≥ Σ pⱼ` over the records labeled `j`, so no
/// division or rounding takes part.
pub fn quarter_joint(labels: &[usize], quarters: &[u32]) -> Option<[[u64; 2]; 2]> {
    let p = |j: usize, q: u32| u64::from(if j == 1 { q } else { 4 - q });
    let mut sum = [0u64; 2];
    let mut n = [0u64; 2];
    for (&y, &q) in labels.iter().zip(quarters) {
        sum[y] += p(y, q);
        n[y] += 1;
    }
    if n.contains(&0) {
        return None;
    }
    let mut c = [[0u64; 2]; 2];
    for (&y, &q) in labels.iter().zip(quarters) {
        let qualifies = |j: usize| p(j, q) * n[j] >= sum[j];
        let est = match (qualifies(0), qualifies(1)) {
            (true, true) if p(1, q) > p(0, q) => 1,
            (true, _) => 0,
            (false, true) => 1,
            (false, false) => continue,
        };
        c[y][est] += 1;
    }
    Some(c)
}

/// Calls `f` on every `(labels, quarters)` fixture of length `n` with
/// quarters drawn from `grid`.
pub fn for_each_fixture(n: usize, grid: &[u32], mut f: impl FnMut(&[usize], &[u32])) {
    let mut labels = vec![0usize; n];
    let mut quarters = vec![0u32; n];
    let g = grid.len();
    let total_q = g.pow(n as u32);
    for mask in 0..(1usize << n) {
        for (k, l) in labels.iter_mut().enumerate() {
            *l = (mask >> k) & 1;
        }
        for code in 0..total_q {
            let mut c = code;
            for q in quarters.iter_mut() {
                *q = grid[c % g];
                c /= g;
            }
            f(&labels, &quarters);
        }
    }
}
