//! Builds the pair task and the two analysis-based auxiliary tasks from
//! labeled exercise pairs.

use fse::cli::{gen_synthetic, SyntheticSpec};
use fse::corpus::Corpus;
use fse::normalizer::Normalizer;
use fse::tasks::{build_tasks, group_by_task, TaskConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_synthetic(&SyntheticSpec {
        templates: 10,
        seed: 3,
        ..SyntheticSpec::default()
    })?;
    let n = Normalizer::new(data.terms.clone());
    let corpus = Corpus::new(data.exercises.iter().map(|e| e.normalize(&n)).collect::<Result<_, _>>()?)?;

    let set = build_tasks(&data.pairs, &corpus, 17, &TaskConfig { t3_negatives: 1 });
    println!("{:?}", set.stats);
    for (task, batch) in group_by_task(&set.pairs) {
        let p = &batch.pairs()[0];
        println!("{task:?}: {} pairs, e.g. label {:?}", batch.len(), p.label);
        println!("  left : {}", p.left.text());
        println!("  right: {}", p.right.text());
    }
    Ok(())
}
