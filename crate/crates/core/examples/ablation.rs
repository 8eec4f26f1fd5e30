//! Runs every pipeline variant on synthetic corpora with injected label
//! noise and prints mean Precision@1 against the true labels.
//!
//! cargo run --example ablation -- --templates 200 --seeds 5

use clap::Parser;
use fse::cli::ablation::{run_ablation, Variant};
use fse::cli::{PipelineConfig, SyntheticSpec};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 200)]
    templates: usize,
    #[arg(long, default_value_t = 3)]
    per_template: usize,
    #[arg(long, default_value_t = 8)]
    candidates: usize,
    #[arg(long, default_value_t = 0.15)]
    flip_rate: f64,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long = "set")]
    overrides: Vec<String>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let spec = SyntheticSpec {
        templates: args.templates,
        per_template: args.per_template,
        candidates: args.candidates,
        flip_rate: args.flip_rate,
        ..SyntheticSpec::default()
    };
    let base = PipelineConfig::parse(&fse::cli::ablation::default_config_toml(), &args.overrides, std::path::Path::new("."))?;
    let work = std::env::temp_dir().join(format!("fse-ablation-{}", std::process::id()));
    let seeds: Vec<u64> = (1..=args.seeds).collect();
    let summary = run_ablation(&spec, &seeds, &Variant::ALL, &base, &work, |r| {
        let alphas: Vec<String> = r.alphas.iter().map(|a| format!("{a:.2}")).collect();
        print!(
            "seed {} {:<13} P@1 {:.3} (noisy labels {:.3}) alpha [{}]",
            r.data_seed,
            r.variant.name(),
            r.p_at[&1],
            r.noisy_p_at[&1],
            alphas.join(" ")
        );
        match &r.prune {
            Some(p) => println!(
                " pruned {} estimate {:.3} precision {:.3} noise {:.3} -> {:.3}",
                p.pruned, p.noise_estimate, p.precision, p.noise_before, p.noise_after
            ),
            None => println!(),
        }
    })?;
    for v in Variant::ALL {
        println!("{:<13} mean P@1 {:.4}  P@3 {:.4}  P@5 {:.4}", v.name(), summary.mean(v, 1), summary.mean(v, 3), summary.mean(v, 5));
    }
    std::fs::remove_dir_all(&work)?;
    Ok(())
}
