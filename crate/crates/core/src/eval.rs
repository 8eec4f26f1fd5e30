//! Candidate generation, ranking and Precision@k.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Exercise, Label, LabeledPair};
use crate::model::vocab::segment;
use crate::model::Model;
use crate::tasks::TaskId;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_POOL_SIZE: usize = 15;
pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("unknown exercise id {0:?}")]
    UnknownId(String),
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error("seed {seed_id:?} has {found} candidates, fewer than k = {k}")]
    InsufficientCandidates { seed_id: String, found: usize, k: usize },
    #[error("no seeds to evaluate")]
    NoSeeds,
    #[error("k must be at least 1")]
    InvalidK,
}

/// BM25 index over the stem tokens of a corpus.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    ids: Vec<String>,
    term_freqs: Vec<BTreeMap<String, u32>>,
    lengths: Vec<usize>,
    avg_len: f64,
    doc_freq: BTreeMap<String, usize>,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, k1: f64, b: f64) -> Result<Self, EvalError> {
        if corpus.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let docs: Vec<(String, Vec<String>)> = corpus.iter().map(|e| (e.id.clone(), segment(&e.stem))).collect();
        Ok(Self::from_tokens(docs, k1, b))
    }

    pub fn from_tokens(docs: Vec<(String, Vec<String>)>, k1: f64, b: f64) -> Self {
        let mut ids = Vec::with_capacity(docs.len());
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for (id, toks) in docs {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &toks {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            ids.push(id);
            lengths.push(toks.len());
            term_freqs.push(tf);
        }
        let avg_len = lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64;
        Bm25Index {
            k1,
            b,
            ids,
            term_freqs,
            lengths,
            avg_len,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `ln((N − df + 0.5) / (df + 0.5) + 1)`, positive for every df.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of document `doc` for a query; each distinct query term counts once.
    pub fn score(&self, query: &[String], doc: usize) -> f64 {
        let terms: BTreeSet<&str> = query.iter().map(String::as_str).collect();
        let norm = if self.avg_len > 0.0 {
            self.k1 * (1.0 - self.b + self.b * self.lengths[doc] as f64 / self.avg_len)
        } else {
            self.k1
        };
        terms
            .into_iter()
            .map(|t| match self.term_freqs[doc].get(t) {
                Some(&tf) => {
                    let tf = tf as f64;
                    self.idf(t) * tf * (self.k1 + 1.0) / (tf + norm)
                }
                None => 0.0,
            })
            .sum()
    }

    /// Top `top_n` documents for `query` excluding `exclude`, by score
    /// descending then id ascending.
    pub fn top(&self, query: &[String], exclude: &str, top_n: usize) -> Vec<(String, f64)> {
        let mut scored: Vec<(String, f64)> = (0..self.ids.len())
            .filter(|&i| self.ids[i] != exclude)
            .map(|i| (self.ids[i].clone(), self.score(query, i)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(top_n);
        scored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Bm25,
    Random,
    RandomWithConcept,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub provenance: Provenance,
}

/// Candidates for one seed. Never contains the seed or a duplicate id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub seed_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    /// Drops the seed and repeated ids, keeping first occurrences.
    pub fn new(seed_id: impl Into<String>, candidates: impl IntoIterator<Item = Candidate>) -> Self {
        let seed_id = seed_id.into();
        let mut seen = BTreeSet::new();
        let candidates = candidates
            .into_iter()
            .filter(|c| c.id != seed_id && seen.insert(c.id.clone()))
            .collect();
        CandidateSet { seed_id, candidates }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.candidates.iter().any(|c| c.id == id)
    }

    fn push(&mut self, id: &str, provenance: Provenance) -> bool {
        if id == self.seed_id || self.contains(id) {
            return false;
        }
        self.candidates.push(Candidate {
            id: id.to_string(),
            provenance,
        });
        true
    }
}

pub fn bm25_candidates(seed: &Exercise, corpus: &Corpus, top_n: usize, k1: f64, b: f64) -> Result<CandidateSet, EvalError> {
    let index = Bm25Index::build(corpus, k1, b)?;
    bm25_candidates_in(&index, seed, top_n)
}

/// BM25 candidates from a prebuilt index.
pub fn bm25_candidates_in(index: &Bm25Index, seed: &Exercise, top_n: usize) -> Result<CandidateSet, EvalError> {
    if top_n == 0 {
        return Err(EvalError::InvalidTopN);
    }
    if index.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let hits = index.top(&segment(&seed.stem), &seed.id, top_n);
    Ok(CandidateSet::new(
        seed.id.clone(),
        hits.into_iter().map(|(id, _)| Candidate {
            id,
            provenance: Provenance::Bm25,
        }),
    ))
}

/// Number of candidates drawn by each strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CandidateMix {
    pub bm25: usize,
    pub random_with_concept: usize,
    pub random: usize,
}

impl Default for CandidateMix {
    fn default() -> Self {
        CandidateMix {
            bm25: DEFAULT_POOL_SIZE,
            random_with_concept: 0,
            random: 0,
        }
    }
}

/// BM25 hits, then concept-sharing uniform draws, then uniform draws.
/// Later strategies skip ids already taken, so the set may come up short
/// on small corpora.
pub fn build_candidates<R: Rng>(
    index: &Bm25Index,
    corpus: &Corpus,
    seed: &Exercise,
    mix: CandidateMix,
    rng: &mut R,
) -> Result<CandidateSet, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut set = if mix.bm25 > 0 {
        bm25_candidates_in(index, seed, mix.bm25)?
    } else {
        CandidateSet::new(seed.id.clone(), [])
    };
    let mut draw = |set: &mut CandidateSet, pool: Vec<&Exercise>, n: usize, provenance: Provenance| {
        let mut pool: Vec<&Exercise> = pool.into_iter().filter(|e| e.id != seed.id && !set.contains(&e.id)).collect();
        pool.shuffle(rng);
        for e in pool.into_iter().take(n) {
            set.push(&e.id, provenance);
        }
    };
    draw(
        &mut set,
        corpus.iter().filter(|e| e.shares_concept(seed)).collect(),
        mix.random_with_concept,
        Provenance::RandomWithConcept,
    );
    draw(&mut set, corpus.iter().collect(), mix.random, Provenance::Random);
    Ok(set)
}

/// Candidates ranked by similarity score, descending, ties by id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub seed_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn from_scores(seed_id: impl Into<String>, mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RankedList {
            seed_id: seed_id.into(),
            entries,
        }
    }

    pub fn top(&self, k: usize) -> impl Iterator<Item = &str> {
        self.entries.iter().take(k).map(|(id, _)| id.as_str())
    }
}

/// Scores candidates against the seed with the T1 head on stem plus options.
pub fn rank(model: &Model, corpus: &Corpus, seed: &Exercise, candidates: &CandidateSet) -> Result<RankedList, EvalError> {
    let u = model.encode_text(&seed.stem_with_options());
    let entries = candidates
        .ids()
        .map(|id| {
            let e = corpus.get(id).ok_or_else(|| EvalError::UnknownId(id.to_string()))?;
            let v = model.encode_text(&e.stem_with_options());
            Ok((id.to_string(), model.score_encoded(TaskId::T1, &u, &v)))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(RankedList::from_scores(seed.id.clone(), entries))
}

/// Ranks every candidate set in parallel; output follows input order.
pub fn rank_all(model: &Model, corpus: &Corpus, sets: &[CandidateSet]) -> Result<Vec<RankedList>, EvalError> {
    sets.par_iter()
        .map(|set| {
            let seed = corpus.get(&set.seed_id).ok_or_else(|| EvalError::UnknownId(set.seed_id.clone()))?;
            rank(model, corpus, seed, set)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPrecision {
    pub seed_id: String,
    pub p_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub p_at: BTreeMap<usize, f64>,
    pub n_seeds: usize,
    pub per_seed: Vec<SeedPrecision>,
}

impl EvalReport {
    pub fn p(&self, k: usize) -> Option<f64> {
        self.p_at.get(&k).copied()
    }
}

/// Per seed `|relevant ∩ top k| / k`, averaged over the seeds.
pub fn precision_at_k(
    ranked: &[RankedList],
    relevance: &BTreeSet<(String, String)>,
    ks: &[usize],
) -> Result<EvalReport, EvalError> {
    if ranked.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    if ks.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let mut per_seed = Vec::with_capacity(ranked.len());
    let mut totals: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    for list in ranked {
        if list.entries.len() < max_k {
            return Err(EvalError::InsufficientCandidates {
                seed_id: list.seed_id.clone(),
                found: list.entries.len(),
                k: max_k,
            });
        }
        let p_at: BTreeMap<usize, f64> = ks
            .iter()
            .map(|&k| {
                let hits = list
                    .top(k)
                    .filter(|id| relevance.contains(&(list.seed_id.clone(), id.to_string())))
                    .count();
                (k, hits as f64 / k as f64)
            })
            .collect();
        for (k, p) in &p_at {
            *totals.get_mut(k).expect("k present") += p;
        }
        per_seed.push(SeedPrecision {
            seed_id: list.seed_id.clone(),
            p_at,
        });
    }
    let n = ranked.len();
    Ok(EvalReport {
        p_at: totals.into_iter().map(|(k, s)| (k, s / n as f64)).collect(),
        n_seeds: n,
        per_seed,
    })
}

/// Candidate sets and relevance judgments from labeled pairs: every
/// candidate paired with a seed is in its set, label 1 marks it relevant.
pub fn judged_candidates<'a>(
    pairs: impl IntoIterator<Item = &'a LabeledPair>,
) -> (Vec<CandidateSet>, BTreeSet<(String, String)>) {
    let mut by_seed: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut relevance = BTreeSet::new();
    for p in pairs {
        by_seed.entry(&p.seed_id).or_default().push(&p.candidate_id);
        if p.label == Label::Similar {
            relevance.insert((p.seed_id.clone(), p.candidate_id.clone()));
        }
    }
    let sets = by_seed
        .into_iter()
        .map(|(seed, cands)| {
            CandidateSet::new(
                seed,
                cands.into_iter().map(|id| Candidate {
                    id: id.to_string(),
                    provenance: Provenance::Bm25,
                }),
            )
        })
        .collect();
    (sets, relevance)
}

/// Ranks the candidates of each judged seed and reports Precision@k.
/// Seeds with fewer than `max(ks)` candidates are an error.
pub fn evaluate<'a>(
    model: &Model,
    corpus: &Corpus,
    pairs: impl IntoIterator<Item = &'a LabeledPair>,
    ks: &[usize],
) -> Result<EvalReport, EvalError> {
    let (sets, relevance) = judged_candidates(pairs);
    let ranked = rank_all(model, corpus, &sets)?;
    precision_at_k(&ranked, &relevance, ks)
}

/// TSV rows `id<TAB>concepts<TAB>x₁ … x_d` of stem-plus-options embeddings.
/// Concepts are comma-joined. An empty filter exports the whole corpus;
/// otherwise rows follow the filter order.
pub fn export_embeddings(model: &Model, corpus: &Corpus, ids: &[String]) -> Result<String, EvalError> {
    let selected: Vec<&Exercise> = if ids.is_empty() {
        corpus.iter().collect()
    } else {
        ids.iter()
            .map(|id| corpus.get(id).ok_or_else(|| EvalError::UnknownId(id.clone())))
            .collect::<Result<_, _>>()?
    };
    let rows: Vec<String> = selected
        .par_iter()
        .map(|e| {
            let emb = model.encode_text(&e.stem_with_options());
            let concepts: Vec<&str> = e.concepts.iter().map(String::as_str).collect();
            let floats: Vec<String> = emb.iter().map(|x| x.to_string()).collect();
            format!("{}\t{}\t{}\n", e.id, concepts.join(","), floats.join("\t"))
        })
        .collect();
    Ok(rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};
    use crate::normalizer::CanonicalText;

    fn ex(id: &str, stem: &str, concepts: &[&str]) -> Exercise {
        Exercise {
            id: id.into(),
            stem: CanonicalText::from_canonical(stem),
            options: vec![],
            analysis: CanonicalText::from_canonical(""),
            concepts: concepts.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bm25_matches_hand_computation() {
        let idx = Bm25Index::from_tokens(
            vec![
                ("d1".into(), toks("a b a")),
                ("d2".into(), toks("b c")),
                ("d3".into(), toks("c c c d")),
            ],
            1.2,
            0.75,
        );
        // avgdl = 3; idf(a) = ln(1 + 2.5 / 1.5), idf(b) = ln(1 + 1.5 / 2.5)
        let idf_a = (1.0f64 + 2.5 / 1.5).ln();
        let idf_b = (1.0f64 + 1.5 / 2.5).ln();
        let d1 = idf_a * 2.0 * 2.2 / (2.0 + 1.2) + idf_b * 2.2 / (1.0 + 1.2);
        let d2 = idf_b * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / 3.0));
        let q = toks("a b");
        assert!((idx.score(&q, 0) - d1).abs() < 1e-9);
        assert!((idx.score(&q, 1) - d2).abs() < 1e-9);
        assert_eq!(idx.score(&q, 2), 0.0);
    }

    #[test]
    fn zero_scores_fall_back_to_id_order() {
        let idx = Bm25Index::from_tokens(
            vec![("z".into(), toks("p")), ("y".into(), toks("q")), ("x".into(), toks("r"))],
            DEFAULT_K1,
            DEFAULT_B,
        );
        let top = idx.top(&toks("nothing"), "none", 3);
        assert_eq!(top.iter().map(|(i, _)| i.as_str()).collect::<Vec<_>>(), ["x", "y", "z"]);
    }

    #[test]
    fn seed_is_excluded() {
        let corpus = Corpus::new(vec![ex("a", "alpha beta", &[]), ex("b", "alpha", &[]), ex("c", "gamma", &[])]).unwrap();
        let set = bm25_candidates(corpus.get("a").unwrap(), &corpus, 5, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(set.ids().collect::<Vec<_>>(), ["b", "c"]);
        assert!(matches!(
            bm25_candidates(corpus.get("a").unwrap(), &corpus, 0, DEFAULT_K1, DEFAULT_B),
            Err(EvalError::InvalidTopN)
        ));
        let empty = Corpus::new(vec![]).unwrap();
        assert_eq!(
            bm25_candidates(corpus.get("a").unwrap(), &empty, 1, DEFAULT_K1, DEFAULT_B).unwrap_err(),
            EvalError::EmptyCorpus
        );
    }

    #[test]
    fn mixed_strategies_have_no_duplicates() {
        use rand::SeedableRng;
        let corpus = Corpus::new(
            (0..12)
                .map(|i| ex(&format!("e{i:02}"), &format!("w{} common", i % 3), &[["k1", "k2"][i % 2]]))
                .collect(),
        )
        .unwrap();
        let idx = Bm25Index::build(&corpus, DEFAULT_K1, DEFAULT_B).unwrap();
        let seed = corpus.get("e00").unwrap();
        let mix = CandidateMix {
            bm25: 3,
            random_with_concept: 3,
            random: 3,
        };
        let set = build_candidates(&idx, &corpus, seed, mix, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(set.len(), 9);
        let unique: BTreeSet<&str> = set.ids().collect();
        assert_eq!(unique.len(), 9);
        assert!(!set.contains("e00"));
        for c in &set.candidates {
            if c.provenance == Provenance::RandomWithConcept {
                assert!(corpus.get(&c.id).unwrap().concepts.contains("k1"));
            }
        }
    }

    fn list(seed: &str, ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores(seed, ids.iter().enumerate().map(|(i, id)| (id.to_string(), (n - i) as f64 / 10.0)).collect())
    }

    fn rel(pairs: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn precision_fixtures() {
        let l = list("s", &["r1", "x", "r2", "y", "z"]);
        let r = precision_at_k(std::slice::from_ref(&l), &rel(&[("s", "r1"), ("s", "r2")]), &[1, 3, 5]).unwrap();
        assert_eq!(r.p(1), Some(1.0));
        assert_eq!(r.p(3), Some(2.0 / 3.0));
        assert_eq!(r.p(5), Some(0.4));

        let all = rel(&[("s", "r1"), ("s", "x"), ("s", "r2"), ("s", "y"), ("s", "z")]);
        let r = precision_at_k(std::slice::from_ref(&l), &all, &DEFAULT_KS).unwrap();
        assert!(r.p_at.values().all(|&p| p == 1.0));

        let m = list("t", &["n", "r"]);
        let r = precision_at_k(&[l.clone(), m], &rel(&[("s", "r1"), ("t", "r")]), &[1]).unwrap();
        assert_eq!(r.p(1), Some(0.5));
        assert_eq!(r.n_seeds, 2);
    }

    #[test]
    fn short_lists_are_rejected() {
        let l = list("s", &["a", "b"]);
        assert!(matches!(
            precision_at_k(&[l], &BTreeSet::new(), &[1, 3]),
            Err(EvalError::InsufficientCandidates { found: 2, k: 3, .. })
        ));
    }

    #[test]
    fn report_json_shape() {
        let r = precision_at_k(&[list("s", &["a"])], &rel(&[("s", "a")]), &[1]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["p_at"]["1"], 1.0);
        assert_eq!(v["n_seeds"], 1);
    }

    fn toy_model(corpus: &Corpus) -> Model {
        let texts: Vec<CanonicalText> = corpus.iter().map(|e| e.stem_with_options()).collect();
        Model::new(
            ModelConfig {
                dim: 6,
                ..ModelConfig::default()
            },
            Vocab::build(&texts, 1),
        )
    }

    #[test]
    fn ranking_is_input_order_independent() {
        let corpus = Corpus::new(vec![
            ex("s", "p q r", &[]),
            ex("a", "p q", &[]),
            ex("b", "r", &[]),
            ex("c", "x y", &[]),
        ])
        .unwrap();
        let m = toy_model(&corpus);
        let seed = corpus.get("s").unwrap();
        let mk = |ids: &[&str]| {
            CandidateSet::new(
                "s",
                ids.iter().map(|id| Candidate {
                    id: id.to_string(),
                    provenance: Provenance::Random,
                }),
            )
        };
        let a = rank(&m, &corpus, seed, &mk(&["a", "b", "c"])).unwrap();
        let b = rank(&m, &corpus, seed, &mk(&["c", "a", "b"])).unwrap();
        assert_eq!(a, b);
        assert!(a.entries.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(rank(&m, &corpus, seed, &mk(&["b"])).unwrap().entries.len(), 1);
        assert_eq!(
            rank(&m, &corpus, seed, &mk(&["missing"])).unwrap_err(),
            EvalError::UnknownId("missing".into())
        );
    }

    #[test]
    fn export_respects_filter_and_is_deterministic() {
        let corpus = Corpus::new(vec![ex("a", "p", &["k2", "k1"]), ex("b", "q", &[]), ex("c", "r", &["k1"])]).unwrap();
        let m = toy_model(&corpus);
        let all = export_embeddings(&m, &corpus, &[]).unwrap();
        assert_eq!(all.lines().count(), 3);
        assert_eq!(all, export_embeddings(&m, &corpus, &[]).unwrap());
        let first = all.lines().next().unwrap();
        assert!(first.starts_with("a\tk1,k2\t"));
        assert_eq!(first.split('\t').count(), 2 + 6);
        let some = export_embeddings(&m, &corpus, &["c".into(), "a".into()]).unwrap();
        assert_eq!(some.lines().map(|l| l.split('\t').next().unwrap()).collect::<Vec<_>>(), ["c", "a"]);
        assert_eq!(
            export_embeddings(&m, &corpus, &["zz".into()]).unwrap_err(),
            EvalError::UnknownId("zz".into())
        );
    }
}
