//! Trains a small scorer and exports exercise embeddings as TSV. The
//! embeddings are compared through the pair head, not by cosine.

use fse::cli::ablation::default_config_toml;
use fse::cli::pipeline::{corpus_vocab, train_model};
use fse::cli::{gen_synthetic, PipelineConfig, SyntheticSpec};
use fse::corpus::Corpus;
use fse::eval::export_embeddings;
use fse::normalizer::Normalizer;
use fse::tasks::{build_tasks, TaskId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_synthetic(&SyntheticSpec {
        templates: 40,
        flip_rate: 0.0,
        ..SyntheticSpec::default()
    })?;
    let n = Normalizer::new(data.terms.clone());
    let corpus = Corpus::new(data.exercises.iter().map(|e| e.normalize(&n)).collect::<Result<_, _>>()?)?;
    let cfg = PipelineConfig::parse(&default_config_toml(), &["moe.enabled=false".to_string()], std::path::Path::new("."))?;
    let tasks = build_tasks(&data.pairs, &corpus, 17, &cfg.task_config());
    let (model, _) = train_model(corpus_vocab(&corpus, 1), &cfg.model_config(), &cfg.train_config(), &tasks.pairs)?;

    let ids: Vec<String> = data.exercises.iter().take(6).map(|e| e.id.clone()).collect();
    let tsv = export_embeddings(&model, &corpus, &ids)?;
    for line in tsv.lines() {
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        println!("{} {} {}...", cols[0], cols[1], &cols[2][..cols[2].len().min(40)]);
    }

    let emb: Vec<Vec<f64>> = ids.iter().map(|id| model.encode_text(&corpus.get(id).expect("id").stem_with_options())).collect();
    // exercises 0..3 share template 0, 3..6 share sibling template 1
    println!("same template score    {:.3}", model.score_encoded(TaskId::T1, &emb[0], &emb[1]));
    println!("sibling template score {:.3}", model.score_encoded(TaskId::T1, &emb[0], &emb[3]));
    Ok(())
}
