//! Confident learning on a hand fixture, then on a synthetic corpus where
//! the injected flips are known.

use fse::clean::{confident_joint, noise_rate_estimate, prune, ProbRecord, PruneStrategy};
use fse::cli::ablation::default_config_toml;
use fse::cli::pipeline::{corpus_vocab, prune_tasks};
use fse::cli::{gen_synthetic, PipelineConfig, SyntheticSpec};
use fse::corpus::{Corpus, Label};
use fse::normalizer::Normalizer;
use fse::tasks::{build_tasks, TaskId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = [
        (0, 0.2),
        (0, 0.3),
        (0, 0.8),
        (1, 0.9),
        (1, 0.6),
        (1, 0.3),
    ];
    let records: Vec<ProbRecord> = fixture
        .iter()
        .enumerate()
        .map(|(i, &(y, p))| ProbRecord::from_p_similar(i, if y == 1 { Label::Similar } else { Label::Dissimilar }, p))
        .collect::<Result<_, _>>()?;
    let joint = confident_joint(&records)?;
    println!("thresholds {:?}", joint.thresholds);
    println!("confident joint {:?}, noise estimate {:.3}", joint.counts, noise_rate_estimate(&joint)?);
    println!("pruned {:?}", prune(&records, &joint, PruneStrategy::PruneByCount).pruned);

    let data = gen_synthetic(&SyntheticSpec {
        templates: 100,
        flip_rate: 0.15,
        ..SyntheticSpec::default()
    })?;
    let n = Normalizer::new(data.terms.clone());
    let corpus = Corpus::new(data.exercises.iter().map(|e| e.normalize(&n)).collect::<Result<_, _>>()?)?;
    let cfg = PipelineConfig::parse(&default_config_toml(), &[], std::path::Path::new("."))?;
    let tasks = build_tasks(&data.pairs, &corpus, 17, &cfg.task_config());
    let vocab = corpus_vocab(&corpus, 1);
    let (kept, report) = prune_tasks(&tasks.pairs, &vocab, &cfg.model_config(), &cfg.fold_train_config(), 4, 17)?;

    let flipped: std::collections::BTreeSet<(&str, &str)> = data
        .pairs
        .iter()
        .zip(&data.flipped)
        .filter(|(_, &f)| f)
        .map(|(p, _)| (p.seed_id.as_str(), p.candidate_id.as_str()))
        .collect();
    let hits = report
        .pruned_pairs
        .iter()
        .filter(|(s, c)| flipped.contains(&(s.as_str(), c.as_str())))
        .count();
    println!(
        "{} T1 pairs, {} flipped; estimate {:.3}; pruned {} ({} were flipped); {} of {} task pairs kept",
        data.pairs.len(),
        flipped.len(),
        report.noise_rate_estimate,
        report.pruned,
        hits,
        kept.len(),
        tasks.pairs.len()
    );
    let t1_kept = kept.iter().filter(|p| p.task == TaskId::T1).count();
    println!("T1 pairs kept: {t1_kept}");
    Ok(())
}
