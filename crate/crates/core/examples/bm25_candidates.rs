//! Candidate generation for a seed exercise: BM25 lexical neighbours mixed
//! with concept-sharing and uniformly random exercises.

use fse::cli::{gen_synthetic, SyntheticSpec};
use fse::corpus::Corpus;
use fse::eval::{build_candidates, Bm25Index, CandidateMix, DEFAULT_B, DEFAULT_K1};
use fse::model::segment;
use fse::normalizer::Normalizer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_synthetic(&SyntheticSpec {
        templates: 30,
        seed: 5,
        ..SyntheticSpec::default()
    })?;
    let n = Normalizer::new(data.terms.clone());
    let corpus = Corpus::new(data.exercises.iter().map(|e| e.normalize(&n)).collect::<Result<_, _>>()?)?;
    let index = Bm25Index::build(&corpus, DEFAULT_K1, DEFAULT_B)?;

    let seed = &corpus.exercises()[0];
    println!("seed {}: {}", seed.id, seed.stem.text());
    let query = segment(&seed.stem_with_options());
    for (id, score) in index.top(&query, &seed.id, 5) {
        let same = data.template_of[corpus.position(&id).expect("indexed id")] == data.template_of[0];
        println!("  {id} {score:7.3} {}", if same { "same template" } else { "" });
    }

    let mix = CandidateMix {
        bm25: 5,
        random_with_concept: 3,
        random: 2,
    };
    let set = build_candidates(&index, &corpus, seed, mix, &mut ChaCha8Rng::seed_from_u64(1))?;
    for c in &set.candidates {
        println!("  {} via {:?}", c.id, c.provenance);
    }
    Ok(())
}
