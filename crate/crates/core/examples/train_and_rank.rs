//! End to end: synthetic corpus, full pipeline run from a config, then the
//! trained scorer ranks one test seed's candidates.

use fse::cli::ablation::default_config_toml;
use fse::cli::synth::{CORPUS_FILE, PAIRS_FILE, TERMS_FILE};
use fse::cli::{gen_synthetic, run_pipeline, PipelineConfig, SyntheticSpec};
use fse::corpus::Split;
use fse::eval::{judged_candidates, rank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("fse-train-and-rank-{}", std::process::id()));
    let data = gen_synthetic(&SyntheticSpec {
        templates: 80,
        ..SyntheticSpec::default()
    })?;
    data.write(&dir)?;
    let overrides = [
        format!("paths.corpus={:?}", dir.join(CORPUS_FILE)),
        format!("paths.pairs={:?}", dir.join(PAIRS_FILE)),
        format!("paths.terms={:?}", dir.join(TERMS_FILE)),
        format!("paths.out={:?}", dir.join("run")),
        "moe.enabled=false".to_string(),
        "clean.enabled=true".to_string(),
    ];
    let cfg = PipelineConfig::parse(&default_config_toml(), &overrides, &dir)?;
    let out = run_pipeline(&cfg)?;

    println!("task pairs {:?}", out.tasks.stats);
    if let Some(p) = &out.prune {
        println!("pruned {} pairs, noise estimate {:.3}", p.pruned, p.noise_rate_estimate);
    }
    println!("final epoch loss {:.4}", out.train.epoch_losses.last().copied().unwrap_or(f64::NAN));
    for (k, p) in &out.report.p_at {
        println!("P@{k} = {p:.3} over {} test seeds", out.report.n_seeds);
    }

    let test = out.pairs_in(Split::Test);
    let (sets, relevant) = judged_candidates(test.iter().copied());
    let set = &sets[0];
    let seed = out.corpus.get(&set.seed_id).expect("seed in corpus");
    let ranked = rank(&out.model, &out.corpus, seed, set)?;
    println!("seed {}: {}", seed.id, seed.stem.text());
    for (id, score) in &ranked.entries {
        let mark = if relevant.contains(&(seed.id.clone(), id.clone())) { "labeled similar" } else { "" };
        println!("  {id} {score:.3} {mark}");
    }
    println!("artifacts: {:?}", out.manifest.artifacts.keys().collect::<Vec<_>>());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
