//! Exercises, labeled pairs and seed-based splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalizer::{CanonicalText, NormalizationError, Normalizer};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate exercise id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {source}")]
    Normalize {
        line: usize,
        #[source]
        source: NormalizationError,
    },
    #[error("line {line}: invalid pair: {message}")]
    InvalidPair { line: usize, message: String },
    #[error("no pairs to split")]
    EmptyInput,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exercise {
    pub id: String,
    pub stem: CanonicalText,
    #[serde(default)]
    pub options: Vec<CanonicalText>,
    pub analysis: CanonicalText,
    #[serde(default)]
    pub concepts: BTreeSet<String>,
}

impl Exercise {
    /// Stem followed by the options, the text compared in the pair task.
    pub fn stem_with_options(&self) -> CanonicalText {
        CanonicalText::concat(std::iter::once(&self.stem).chain(self.options.iter()), " ")
    }

    pub fn shares_concept(&self, other: &Exercise) -> bool {
        self.concepts.intersection(&other.concepts).next().is_some()
    }
}

/// One line of the exercise JSONL file, before normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExercise {
    pub id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub analysis: String,
    pub concepts: Vec<String>,
}

impl RawExercise {
    pub fn normalize(&self, normalizer: &Normalizer) -> Result<Exercise, NormalizationError> {
        Ok(Exercise {
            id: self.id.clone(),
            stem: normalizer.normalize(&self.stem)?,
            options: self
                .options
                .iter()
                .map(|o| normalizer.normalize(o))
                .collect::<Result<_, _>>()?,
            analysis: normalizer.normalize(&self.analysis)?,
            concepts: self.concepts.iter().cloned().collect(),
        })
    }

    /// Keeps every field as written; used when normalization is switched off.
    pub fn verbatim(&self) -> Exercise {
        Exercise {
            id: self.id.clone(),
            stem: CanonicalText::from_canonical(self.stem.clone()),
            options: self.options.iter().cloned().map(CanonicalText::from_canonical).collect(),
            analysis: CanonicalText::from_canonical(self.analysis.clone()),
            concepts: self.concepts.iter().cloned().collect(),
        }
    }
}

impl From<&Exercise> for RawExercise {
    fn from(e: &Exercise) -> Self {
        RawExercise {
            id: e.id.clone(),
            stem: e.stem.text().to_string(),
            options: e.options.iter().map(|o| o.text().to_string()).collect(),
            analysis: e.analysis.text().to_string(),
            concepts: e.concepts.iter().cloned().collect(),
        }
    }
}

/// An immutable collection of exercises with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    exercises: Vec<Exercise>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(exercises: Vec<Exercise>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(exercises.len());
        for (i, e) in exercises.iter().enumerate() {
            if e.id.is_empty() {
                return Err(CorpusError::Schema {
                    line: i + 1,
                    message: "empty id".into(),
                });
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: e.id.clone(),
                });
            }
        }
        Ok(Corpus { exercises, index })
    }

    pub fn get(&self, id: &str) -> Option<&Exercise> {
        self.index.get(id).map(|&i| &self.exercises[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn exercises(&self) -> &[Exercise] {
        &self.exercises
    }

    pub fn len(&self) -> usize {
        self.exercises.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exercises.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Exercise> {
        self.exercises.iter()
    }

    /// Writes one JSON object per line, fields as in the input schema.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.exercises {
            serde_json::to_writer(&mut w, &RawExercise::from(e))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads raw exercise lines without normalizing them.
pub fn read_raw_exercises<R: BufRead>(reader: R) -> Result<Vec<(usize, RawExercise)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExercise = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, raw));
    }
    Ok(out)
}

/// Parses exercise JSONL, normalizing every text field.
pub fn parse_corpus<R: BufRead>(reader: R, normalizer: Option<&Normalizer>) -> Result<Corpus, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut exercises = Vec::new();
    for (line, raw) in read_raw_exercises(reader)? {
        if raw.id.is_empty() {
            return Err(CorpusError::Schema {
                line,
                message: "empty id".into(),
            });
        }
        if seen.insert(raw.id.clone(), line).is_some() {
            return Err(CorpusError::DuplicateId { line, id: raw.id });
        }
        let ex = match normalizer {
            Some(n) => raw
                .normalize(n)
                .map_err(|source| CorpusError::Normalize { line, source })?,
            None => raw.verbatim(),
        };
        exercises.push(ex);
    }
    Corpus::new(exercises)
}

pub fn load_corpus(path: &Path, normalizer: &Normalizer) -> Result<Corpus, CorpusError> {
    let f = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_corpus(BufReader::new(f), Some(normalizer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Dissimilar = 0,
    Similar = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Similar => Label::Dissimilar,
            Label::Dissimilar => Label::Similar,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Dissimilar),
            1 => Ok(Label::Similar),
            _ => Err(format!("label must be 0 or 1, got {v}")),
        }
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "0" => Ok(Label::Dissimilar),
            "1" => Ok(Label::Similar),
            other => Err(format!("label must be 0 or 1, got {other:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Votes {
    pub similar: u32,
    pub total: u32,
}

pub const ANNOTATORS_PER_PAIR: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub seed_id: String,
    pub candidate_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<Votes>,
}

impl LabeledPair {
    pub fn new(seed_id: impl Into<String>, candidate_id: impl Into<String>, label: Label) -> Self {
        LabeledPair {
            seed_id: seed_id.into(),
            candidate_id: candidate_id.into(),
            label,
            votes: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.seed_id.is_empty() || self.candidate_id.is_empty() {
            return Err("empty id".into());
        }
        if self.seed_id == self.candidate_id {
            return Err(format!("seed and candidate are both {:?}", self.seed_id));
        }
        if let Some(v) = self.votes {
            if v.total != ANNOTATORS_PER_PAIR {
                return Err(format!("expected {ANNOTATORS_PER_PAIR} votes, got {}", v.total));
            }
            if v.similar > v.total {
                return Err("more similar votes than voters".into());
            }
            let majority = if 2 * v.similar > v.total {
                Label::Similar
            } else {
                Label::Dissimilar
            };
            if majority != self.label {
                return Err(format!("label {} disagrees with majority of {}/{}", self.label, v.similar, v.total));
            }
        }
        Ok(())
    }
}

/// Parses `seed<TAB>candidate<TAB>label[<TAB>similar_votes/total_votes]`.
pub fn parse_pairs(src: &str) -> Result<Vec<LabeledPair>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| CorpusError::InvalidPair {
            line: line_no,
            message,
        };
        if cols.len() != 3 && cols.len() != 4 {
            return Err(bad(format!("expected 3 or 4 columns, got {}", cols.len())));
        }
        let label: Label = cols[2].parse().map_err(bad)?;
        let votes = match cols.get(3) {
            Some(v) => {
                let (s, t) = v
                    .split_once('/')
                    .ok_or_else(|| bad(format!("votes must look like 2/3, got {v:?}")))?;
                Some(Votes {
                    similar: s.trim().parse().map_err(|_| bad(format!("bad vote count {s:?}")))?,
                    total: t.trim().parse().map_err(|_| bad(format!("bad vote total {t:?}")))?,
                })
            }
            None => None,
        };
        let pair = LabeledPair {
            seed_id: cols[0].to_string(),
            candidate_id: cols[1].to_string(),
            label,
            votes,
        };
        pair.validate().map_err(bad)?;
        out.push(pair);
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<LabeledPair>, CorpusError> {
    let src = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_pairs(&src)
}

pub fn pairs_to_tsv<'a>(pairs: impl IntoIterator<Item = &'a LabeledPair>) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}", p.seed_id, p.candidate_id, p.label));
        if let Some(v) = p.votes {
            out.push_str(&format!("\t{}/{}", v.similar, v.total));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Seed id → split. Pairs follow their seed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seeds: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, pair: &LabeledPair) -> Option<Split> {
        self.seeds.get(&pair.seed_id).copied()
    }

    pub fn seed_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.seeds.values() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn seeds_in(&self, split: Split) -> BTreeSet<&str> {
        self.seeds
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn select<'a>(&self, pairs: &'a [LabeledPair], split: Split) -> Vec<&'a LabeledPair> {
        pairs.iter().filter(|p| self.split_of(p) == Some(split)).collect()
    }

    pub fn to_tsv(&self) -> String {
        self.seeds.iter().map(|(k, s)| format!("{k}\t{s}\n")).collect()
    }
}

/// Largest-remainder apportionment of `n` items by `ratios`; ties favor the
/// earlier split.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assigns seed ids to train/valid/test. Deterministic in `rng_seed`.
pub fn split_by_seed(pairs: &[LabeledPair], ratios: [f64; 3], rng_seed: u64) -> Result<SplitAssignment, CorpusError> {
    if ratios.iter().any(|r| r.is_nan() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(ratios));
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let unique: BTreeSet<&str> = pairs.iter().map(|p| p.seed_id.as_str()).collect();
    let mut seeds: Vec<&str> = unique.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    seeds.shuffle(&mut rng);
    let counts = apportion(seeds.len(), ratios);
    let mut assignment = SplitAssignment::default();
    let mut it = seeds.into_iter();
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        for s in it.by_ref().take(count) {
            assignment.seeds.insert(s.to_string(), split);
        }
    }
    Ok(assignment)
}
