//! Synthetic templated corpora with injected label noise.
//!
//! Every exercise instantiates a template. Exercises of one template are
//! truly similar; all other pairs are truly dissimilar. Templates come in
//! sibling pairs sharing one key term, which serve as hard negatives, and in
//! concept groups sharing a method word. Analyses repeat the template's own
//! key term, so stem-to-analysis matching carries the same signal as T1.
//! Surface variation comes from synonyms (undone by the emitted term table)
//! and LaTeX presentation noise (undone by formula canonicalization).

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::corpus::{pairs_to_tsv, Label, LabeledPair, RawExercise};
use crate::normalizer::TermTable;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const TERMS_FILE: &str = "terms.tsv";
pub const MASK_FILE: &str = "noise_mask.tsv";

const SYNONYMS: usize = 3;
const FILLER_WORDS: usize = 40;
const FILLERS_PER_STEM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub templates: usize,
    pub per_template: usize,
    /// Probability that a pair label is inverted; below 0.5.
    pub flip_rate: f64,
    pub seed: u64,
    /// Candidates per seed exercise.
    pub candidates: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            templates: 200,
            per_template: 3,
            flip_rate: 0.15,
            seed: 17,
            candidates: 8,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::InvalidSpec(m));
        if !(0.0..0.5).contains(&self.flip_rate) {
            return bad(format!("flip rate {} is outside [0, 0.5)", self.flip_rate));
        }
        if self.templates < 2 {
            return bad("at least 2 templates are needed".into());
        }
        if self.per_template < 2 {
            return bad("at least 2 exercises per template are needed".into());
        }
        if self.candidates < self.per_template {
            return bad(format!(
                "{} candidates cannot hold the {} same-template exercises plus a negative",
                self.candidates,
                self.per_template - 1
            ));
        }
        if self.candidates > (self.templates - 1) * self.per_template + self.per_template - 1 {
            return bad("more candidates requested than exercises exist".into());
        }
        Ok(())
    }
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub exercises: Vec<RawExercise>,
    /// Observed labels, after flipping.
    pub pairs: Vec<LabeledPair>,
    pub true_labels: Vec<Label>,
    pub flipped: Vec<bool>,
    pub terms: TermTable,
    /// Template of each exercise, parallel to `exercises`.
    pub template_of: Vec<usize>,
}

impl SyntheticData {
    pub fn clean_pairs(&self) -> Vec<LabeledPair> {
        self.pairs
            .iter()
            .zip(&self.true_labels)
            .map(|(p, &y)| LabeledPair { label: y, ..p.clone() })
            .collect()
    }

    pub fn flip_count(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }

    /// `seed<TAB>candidate<TAB>true label<TAB>flipped` with a header.
    pub fn mask_tsv(&self) -> String {
        let mut out = String::from("seed_id\tcandidate_id\ttrue_label\tflipped\n");
        for ((p, y), f) in self.pairs.iter().zip(&self.true_labels).zip(&self.flipped) {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", p.seed_id, p.candidate_id, y.index(), u8::from(*f)));
        }
        out
    }

    pub fn corpus_jsonl(&self) -> String {
        self.exercises
            .iter()
            .map(|e| serde_json::to_string(e).expect("exercise serializes") + "\n")
            .collect()
    }

    /// Writes corpus, pairs, term table and noise mask into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let files = [
            (CORPUS_FILE, self.corpus_jsonl()),
            (PAIRS_FILE, pairs_to_tsv(&self.pairs)),
            (TERMS_FILE, self.terms.to_tsv()),
            (MASK_FILE, self.mask_tsv()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            crate::atomic_write(&path, body.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

/// Reads a noise mask back as `(seed, candidate) → true label`.
pub fn parse_mask(src: &str) -> Result<Vec<(String, String, Label, bool)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in src.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || CliError::data("mask", format!("line {}: malformed mask row", n + 1));
        if cols.len() != 4 {
            return Err(bad());
        }
        let label: Label = cols[2].parse().map_err(|_| bad())?;
        let flipped = match cols[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        out.push((cols[0].to_string(), cols[1].to_string(), label, flipped));
    }
    Ok(out)
}

struct Lexicon {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Lexicon {
    /// Fresh pseudo-word of three consonant-vowel syllables and a final
    /// consonant. No issued word contains another as a substring.
    fn word(&mut self) -> String {
        const C: &[u8] = b"bdfgklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let mut w = String::new();
            for _ in 0..3 {
                w.push(C[self.rng.gen_range(0..C.len())] as char);
                w.push(V[self.rng.gen_range(0..V.len())] as char);
            }
            w.push(C[self.rng.gen_range(0..C.len())] as char);
            if self.used.iter().all(|u| !u.contains(&w) && !w.contains(u.as_str())) {
                self.used.insert(w.clone());
                return w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Skeleton {
    Root,
    Frac,
    Power,
}

struct Formula {
    skeleton: Skeleton,
    nums: [u32; 4],
    vars: [char; 2],
}

struct Template {
    concept: usize,
    /// Shared with the sibling template.
    key_shared: usize,
    key_own: usize,
    method_own: String,
}

/// One formula in a randomly chosen presentation; every presentation
/// canonicalizes to the same string.
fn formula<R: Rng>(t: &Formula, rng: &mut R) -> String {
    let [a, b, c, d] = t.nums;
    let [p, q] = t.vars;
    let style = rng.gen_range(0..3);
    let var = |v: char| if style == 2 { format!(r"\mathrm{{{v}}}") } else { v.to_string() };
    let minus = if style == 0 { "-" } else { r"\text{-}" };
    let (p, q) = (var(p), var(q));
    match t.skeleton {
        Skeleton::Root => {
            let sp = if style == 1 { " " } else { "" };
            format!(r"\sqrt[{a}{p}{minus}{b}]{{{c}{p}+{q}{sp}{minus}{d}}}")
        }
        Skeleton::Frac => format!(r"\frac{{{a}{p}+{b}}}{{{c}{q}{minus}{d}}}"),
        Skeleton::Power => format!(r"{a}{p}^{{{b}}}+{c}{q}{minus}{d}"),
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, CliError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lex = Lexicon {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed),
        used: BTreeSet::new(),
    };
    let n_concepts = (spec.templates / 5).max(2);
    let n_shared = spec.templates.div_ceil(2);

    // term k has surface forms terms[k][0..SYNONYMS]; form 0 is canonical
    let terms: Vec<Vec<String>> = (0..n_shared + spec.templates)
        .map(|_| (0..SYNONYMS).map(|_| lex.word()).collect())
        .collect();
    let concept_methods: Vec<String> = (0..n_concepts).map(|_| lex.word()).collect();
    let fillers: Vec<String> = (0..FILLER_WORDS).map(|_| lex.word()).collect();
    let table = TermTable::new(
        terms
            .iter()
            .flat_map(|forms| forms[1..].iter().map(move |s| (s.clone(), forms[0].clone()))),
    )
    .map_err(|e| CliError::InvalidSpec(e.to_string()))?;

    let letters = ['x', 'y', 'a', 'b', 'm', 'n'];
    let formulas: Vec<Formula> = (0..spec.templates)
        .map(|_| {
            let mut vars = letters.choose_multiple(&mut rng, 2);
            Formula {
                skeleton: [Skeleton::Root, Skeleton::Frac, Skeleton::Power][rng.gen_range(0..3)],
                nums: [
                    rng.gen_range(2..10),
                    rng.gen_range(1..20),
                    rng.gen_range(2..10),
                    rng.gen_range(1..20),
                ],
                vars: [*vars.next().expect("two letters"), *vars.next().expect("two letters")],
            }
        })
        .collect();
    let templates: Vec<Template> = (0..spec.templates)
        .map(|t| Template {
            concept: t % n_concepts,
            key_shared: t / 2,
            key_own: n_shared + t,
            method_own: lex.word(),
        })
        .collect();

    // exercise ids are a shuffled numbering so id order carries no signal
    let n_ex = spec.templates * spec.per_template;
    let mut numbering: Vec<usize> = (0..n_ex).collect();
    numbering.shuffle(&mut rng);
    let id_of = |k: usize| format!("ex{:05}", numbering[k]);

    let mut exercises = Vec::with_capacity(n_ex);
    let mut template_of = Vec::with_capacity(n_ex);
    for (t, tpl) in templates.iter().enumerate() {
        for i in 0..spec.per_template {
            let mut pick = |k: usize| terms[k][rng.gen_range(0..SYNONYMS)].clone();
            let shared = pick(tpl.key_shared);
            let own = pick(tpl.key_own);
            let own_again = pick(tpl.key_own);
            let f: Vec<&String> = fillers.choose_multiple(&mut rng, FILLERS_PER_STEM + 2).collect();
            let stem = format!(
                "{} {} {} {} ${}$ {} {}?",
                f[0],
                shared,
                f[1],
                own,
                formula(&formulas[t], &mut rng),
                f[2],
                f[3]
            );
            let options = (0..2)
                .map(|_| format!("${}={}$", formulas[t].vars[0], rng.gen_range(0..20)))
                .collect();
            let analysis = format!(
                "{} {} {} {} ${}$ {}.",
                concept_methods[tpl.concept],
                f[4],
                own_again,
                tpl.method_own,
                formula(&formulas[t], &mut rng),
                f[5]
            );
            exercises.push(RawExercise {
                id: id_of(t * spec.per_template + i),
                stem,
                options,
                analysis,
                concepts: vec![format!("concept{:03}", tpl.concept)],
            });
            template_of.push(t);
        }
    }

    let mut pairs = Vec::new();
    let mut true_labels = Vec::new();
    let mut flipped = Vec::new();
    for t in 0..spec.templates {
        let seed = t * spec.per_template;
        let positives: Vec<usize> = (1..spec.per_template).map(|i| seed + i).collect();
        let sibling = t ^ 1;
        let mut hard: Vec<usize> = if sibling < spec.templates {
            (0..spec.per_template).map(|i| sibling * spec.per_template + i).collect()
        } else {
            Vec::new()
        };
        hard.shuffle(&mut rng);
        let mut chosen: Vec<usize> = positives.clone();
        let n_neg = spec.candidates - positives.len();
        chosen.extend(hard.into_iter().take(n_neg.min(spec.per_template)));
        let concept_peers: Vec<usize> = (0..n_ex)
            .filter(|&k| {
                let u = template_of[k];
                u != t && templates[u].concept == templates[t].concept && !chosen.contains(&k)
            })
            .collect();
        let want = (spec.candidates - chosen.len()).min(2);
        chosen.extend(concept_peers.choose_multiple(&mut rng, want));
        let mut rest: Vec<usize> = (0..n_ex).filter(|&k| template_of[k] != t && !chosen.contains(&k)).collect();
        rest.shuffle(&mut rng);
        let fill = spec.candidates - chosen.len();
        chosen.extend(rest.into_iter().take(fill));
        chosen.shuffle(&mut rng);
        for k in chosen {
            let truth = if template_of[k] == t { Label::Similar } else { Label::Dissimilar };
            let flip = rng.gen_bool(spec.flip_rate);
            let label = if flip { truth.flipped() } else { truth };
            pairs.push(LabeledPair::new(id_of(seed), id_of(k), label));
            true_labels.push(truth);
            flipped.push(flip);
        }
    }

    Ok(SyntheticData {
        exercises,
        pairs,
        true_labels,
        flipped,
        terms: table,
        template_of,
    })
}
