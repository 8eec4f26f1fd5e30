//! Gate networks map per-task features to convex task weights, which
//! combine the task losses into one objective.

use fse::moe::{combined_loss, gate_forward, softmax_active, static_weights, GateConfig, GateParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = GateConfig {
        feature_dim: 4,
        hidden: vec![8, 4],
        shared: false,
    };
    let mut gates = GateParams::new(&cfg, &mut rng);
    let features: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let fresh = gate_forward(&gates, [&features[0], &features[1], &features[2]])?;
    println!("fresh gates (zero output layers): {:?}", fresh.alphas());

    for net in gates.networks_mut() {
        let out = net.layers.last_mut().expect("output layer");
        out.w.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
    }
    let w = gate_forward(&gates, [&features[0], &features[1], &features[2]])?;
    println!("perturbed gates: {:?}, sum {}", w.alphas(), w.alphas().iter().sum::<f64>());

    let losses = [0.7, 0.4, 0.9];
    println!("combined loss {:.4}", combined_loss(losses, &w));
    println!("static (0.5, 0.3, 0.2): {:.4}", combined_loss(losses, &static_weights([0.5, 0.3, 0.2])?));

    println!("softmax(ln 2, 0, 0) = {:?}", softmax_active([Some(2f64.ln()), Some(0.0), Some(0.0)])?.alphas());
    println!("T3 inactive: {:?}", softmax_active([Some(1.0), Some(1.0), None])?.alphas());
    Ok(())
}
