//! Compares analytic gradients of the gated multi-task objective with
//! central finite differences on a tiny model.

use fse::model::{gradients, objective, EncodedBatch, EncodedPair, ModelConfig, ParamSet, Weighting};
use fse::tasks::TaskId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vocab = 10;
    let cfg = ModelConfig {
        dim: 4,
        gate_hidden: vec![6],
        ..ModelConfig::default()
    };
    let mut params = ParamSet::new(&cfg, vocab);
    // fresh output layers are zero; randomise everything so every path is exercised
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    let mut text = || (0..rng.gen_range(1..5)).map(|_| rng.gen_range(2..vocab as u32)).collect::<Vec<_>>();
    let batches: Vec<EncodedBatch> = TaskId::ALL
        .into_iter()
        .enumerate()
        .map(|(i, task)| EncodedBatch {
            task,
            pairs: (0..3)
                .map(|j| EncodedPair {
                    left: text(),
                    right: text(),
                    label: ((i + j) % 2) as f64,
                })
                .collect(),
        })
        .collect();

    let (stats, grad) = gradients(&params, &batches, Weighting::Gated)?;
    println!("loss {:.6}, alphas {:?}", stats.loss, stats.weights.alphas());
    let h = 1e-5;
    let mut work = params.clone();
    for (k, (name, analytic)) in grad.tensors().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..analytic.data.len() {
            let orig = work.tensors_mut()[k][i];
            work.tensors_mut()[k][i] = orig + h;
            let fp = objective(&work, &batches, Weighting::Gated)?.loss;
            work.tensors_mut()[k][i] = orig - h;
            let fm = objective(&work, &batches, Weighting::Gated)?.loss;
            work.tensors_mut()[k][i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            worst = worst.max((numeric - analytic.data[i]).abs() / numeric.abs().max(analytic.data[i].abs()).max(1e-4));
        }
        println!("{name:<24} {:>4} params  max relative error {worst:.2e}", analytic.data.len());
    }
    Ok(())
}
