//! Auxiliary task construction.
//!
//! Each labeled seed/candidate pair yields:
//! - T1: stem and options of both sides, with the pair's label.
//! - T2: both analyses, with the pair's label.
//! - T3: stem against analysis. The two matching stem/analysis pairs are
//!   positives. The negative depends on the label. A dissimilar pair gives
//!   (stem A, analysis B). A similar pair gives stem A against the analysis of
//!   a sampled exercise that shares a concept with A.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Exercise, Label, LabeledPair};
use crate::normalizer::CanonicalText;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("unknown exercise id {0:?}")]
    UnknownId(String),
    #[error("exercise {0:?} has no analysis")]
    MissingAnalysis(String),
    #[error("batch mixes tasks {0} and {1}")]
    MixedTasks(TaskId, TaskId),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    T1,
    T2,
    T3,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::T1, TaskId::T2, TaskId::T3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::T1 => "T1",
            TaskId::T2 => "T2",
            TaskId::T3 => "T3",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "T1" | "t1" => Ok(TaskId::T1),
            "T2" | "t2" => Ok(TaskId::T2),
            "T3" | "t3" => Ok(TaskId::T3),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// The labeled pair a task pair was derived from. `sampled_id` names the
/// exercise whose analysis was drawn for a T3 negative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub seed_id: String,
    pub candidate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_id: Option<String>,
    /// The sampled exercise shares no concept with the seed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl Origin {
    pub fn of(pair: &LabeledPair) -> Self {
        Origin {
            seed_id: pair.seed_id.clone(),
            candidate_id: pair.candidate_id.clone(),
            sampled_id: None,
            fallback: false,
        }
    }

    /// Key of the labeled pair, shared by all task pairs derived from it.
    pub fn pair_key(&self) -> (&str, &str) {
        (&self.seed_id, &self.candidate_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPair {
    pub task: TaskId,
    pub left: CanonicalText,
    pub right: CanonicalText,
    pub label: Label,
    pub origin: Origin,
}

/// Pairs of a single task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskBatch {
    task: TaskId,
    pairs: Vec<TaskPair>,
}

impl TaskBatch {
    pub fn new(task: TaskId, pairs: Vec<TaskPair>) -> Result<Self, TaskError> {
        if let Some(p) = pairs.iter().find(|p| p.task != task) {
            return Err(TaskError::MixedTasks(task, p.task));
        }
        Ok(TaskBatch { task, pairs })
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn pairs(&self) -> &[TaskPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Splits into consecutive batches of at most `size` pairs.
    pub fn chunks(&self, size: usize) -> Vec<TaskBatch> {
        self.pairs
            .chunks(size.max(1))
            .map(|c| TaskBatch {
                task: self.task,
                pairs: c.to_vec(),
            })
            .collect()
    }
}

/// Groups pairs by task, keeping input order within each group.
pub fn group_by_task<'a>(pairs: impl IntoIterator<Item = &'a TaskPair>) -> BTreeMap<TaskId, TaskBatch> {
    let mut out: BTreeMap<TaskId, TaskBatch> = BTreeMap::new();
    for p in pairs {
        out.entry(p.task)
            .or_insert_with(|| TaskBatch {
                task: p.task,
                pairs: Vec::new(),
            })
            .pairs
            .push(p.clone());
    }
    out
}

fn resolve<'c>(corpus: &'c Corpus, id: &str) -> Result<&'c Exercise, TaskError> {
    corpus.get(id).ok_or_else(|| TaskError::UnknownId(id.to_string()))
}

fn resolve_pair<'c>(pair: &LabeledPair, corpus: &'c Corpus) -> Result<(&'c Exercise, &'c Exercise), TaskError> {
    Ok((resolve(corpus, &pair.seed_id)?, resolve(corpus, &pair.candidate_id)?))
}

pub fn build_t1(pair: &LabeledPair, corpus: &Corpus) -> Result<TaskPair, TaskError> {
    let (a, b) = resolve_pair(pair, corpus)?;
    Ok(TaskPair {
        task: TaskId::T1,
        left: a.stem_with_options(),
        right: b.stem_with_options(),
        label: pair.label,
        origin: Origin::of(pair),
    })
}

fn require_analysis(e: &Exercise) -> Result<(), TaskError> {
    if e.analysis.is_empty() {
        Err(TaskError::MissingAnalysis(e.id.clone()))
    } else {
        Ok(())
    }
}

pub fn build_t2(pair: &LabeledPair, corpus: &Corpus) -> Result<TaskPair, TaskError> {
    let (a, b) = resolve_pair(pair, corpus)?;
    require_analysis(a)?;
    require_analysis(b)?;
    Ok(TaskPair {
        task: TaskId::T2,
        left: a.analysis.clone(),
        right: b.analysis.clone(),
        label: pair.label,
        origin: Origin::of(pair),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T3Flag {
    /// No exercise shares a concept with the seed; negatives were drawn uniformly.
    NoConceptPeer,
    /// No exercise other than the pair has an analysis; only positives emitted.
    NoNegative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct T3Output {
    pub pairs: Vec<TaskPair>,
    pub flag: Option<T3Flag>,
}

fn t3_pair(stem: &Exercise, analysis: &Exercise, label: Label, origin: Origin) -> TaskPair {
    TaskPair {
        task: TaskId::T3,
        left: stem.stem.clone(),
        right: analysis.analysis.clone(),
        label,
        origin,
    }
}

/// Builds T3 pairs. `negatives` bounds the number of negatives per pair;
/// sampled negatives are drawn without replacement.
pub fn build_t3<R: Rng + ?Sized>(
    pair: &LabeledPair,
    corpus: &Corpus,
    rng: &mut R,
    negatives: usize,
) -> Result<T3Output, TaskError> {
    let (a, b) = resolve_pair(pair, corpus)?;
    require_analysis(a)?;
    require_analysis(b)?;
    let origin = Origin::of(pair);
    let mut pairs = vec![
        t3_pair(a, a, Label::Similar, origin.clone()),
        t3_pair(b, b, Label::Similar, origin.clone()),
    ];
    let mut flag = None;
    match pair.label {
        Label::Dissimilar => {
            if negatives >= 1 {
                pairs.push(t3_pair(a, b, Label::Dissimilar, origin.clone()));
            }
            if negatives >= 2 {
                pairs.push(t3_pair(b, a, Label::Dissimilar, origin));
            }
        }
        Label::Similar if negatives > 0 => {
            let eligible =
                |x: &&Exercise| x.id != a.id && x.id != b.id && !x.analysis.is_empty();
            let peers: Vec<&Exercise> = corpus.iter().filter(eligible).filter(|x| x.shares_concept(a)).collect();
            let (pool, fallback) = if peers.is_empty() {
                (corpus.iter().filter(eligible).collect::<Vec<_>>(), true)
            } else {
                (peers, false)
            };
            if pool.is_empty() {
                flag = Some(T3Flag::NoNegative);
            } else {
                if fallback {
                    flag = Some(T3Flag::NoConceptPeer);
                }
                for x in pool.choose_multiple(rng, negatives) {
                    let origin = Origin {
                        sampled_id: Some(x.id.clone()),
                        fallback,
                        ..origin.clone()
                    };
                    pairs.push(t3_pair(a, x, Label::Dissimilar, origin));
                }
            }
        }
        Label::Similar => {}
    }
    Ok(T3Output { pairs, flag })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub t3_negatives: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { t3_negatives: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub t1: usize,
    pub t2: usize,
    pub t3: usize,
    pub unknown_id: usize,
    pub missing_analysis: usize,
    pub no_concept_peer: usize,
    pub no_negative: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskSet {
    pub pairs: Vec<TaskPair>,
    pub stats: TaskStats,
}

impl TaskSet {
    pub fn of_task(&self, task: TaskId) -> impl Iterator<Item = &TaskPair> {
        self.pairs.iter().filter(move |p| p.task == task)
    }
}

/// Rng for the pair at `index`; independent of how pairs are scheduled.
pub fn pair_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Builds all three tasks. Pairs with unresolvable ids are skipped; missing
/// analyses skip only T2 and T3.
pub fn build_tasks(pairs: &[LabeledPair], corpus: &Corpus, master_seed: u64, config: &TaskConfig) -> TaskSet {
    let per_pair: Vec<(Vec<TaskPair>, TaskStats)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let mut stats = TaskStats::default();
            let mut out = Vec::new();
            match build_t1(pair, corpus) {
                Ok(t1) => {
                    out.push(t1);
                    stats.t1 += 1;
                }
                Err(_) => {
                    stats.unknown_id += 1;
                    return (out, stats);
                }
            }
            match build_t2(pair, corpus) {
                Ok(t2) => {
                    out.push(t2);
                    stats.t2 += 1;
                }
                Err(_) => stats.missing_analysis += 1,
            }
            if let Ok(t3) = build_t3(pair, corpus, &mut pair_rng(master_seed, i), config.t3_negatives) {
                stats.t3 += t3.pairs.len();
                match t3.flag {
                    Some(T3Flag::NoConceptPeer) => stats.no_concept_peer += 1,
                    Some(T3Flag::NoNegative) => stats.no_negative += 1,
                    None => {}
                }
                out.extend(t3.pairs);
            }
            (out, stats)
        })
        .collect();
    let mut set = TaskSet::default();
    for (p, s) in per_pair {
        set.pairs.extend(p);
        set.stats.t1 += s.t1;
        set.stats.t2 += s.t2;
        set.stats.t3 += s.t3;
        set.stats.unknown_id += s.unknown_id;
        set.stats.missing_analysis += s.missing_analysis;
        set.stats.no_concept_peer += s.no_concept_peer;
        set.stats.no_negative += s.no_negative;
    }
    set
}

pub fn write_task_pairs<'a, W: Write>(
    mut w: W,
    pairs: impl IntoIterator<Item = &'a TaskPair>,
) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_task_pairs<R: BufRead>(r: R) -> Result<Vec<TaskPair>, TaskError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let schema = |message: String| TaskError::Schema { line: i + 1, message };
        let line = line.map_err(|e| schema(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ex(id: &str, analysis: &str, concepts: &[&str]) -> Exercise {
        Exercise {
            id: id.into(),
            stem: CanonicalText::from_canonical(format!("stem {id}")),
            options: vec![CanonicalText::from_canonical(format!("opt {id}"))],
            analysis: CanonicalText::from_canonical(analysis),
            concepts: concepts.iter().map(|c| c.to_string()).collect(),
        }
    }

    fn corpus() -> Corpus {
        Corpus::new(vec![
            ex("a", "an a", &["k1"]),
            ex("b", "an b", &["k1"]),
            ex("x", "an x", &["k1"]),
            ex("y", "an y", &["k2"]),
            ex("z", "", &["k1"]),
        ])
        .unwrap()
    }

    #[test]
    fn t1_concatenates_stem_and_options() {
        let t = build_t1(&LabeledPair::new("a", "b", Label::Similar), &corpus()).unwrap();
        assert_eq!(t.left.text(), "stem a opt a");
        assert_eq!(t.right.text(), "stem b opt b");
        assert_eq!(t.label, Label::Similar);
        let t = build_t1(&LabeledPair::new("a", "b", Label::Dissimilar), &corpus()).unwrap();
        assert_eq!(t.label, Label::Dissimilar);
        assert_eq!(
            build_t1(&LabeledPair::new("a", "q", Label::Similar), &corpus()),
            Err(TaskError::UnknownId("q".into()))
        );
    }

    #[test]
    fn t2_uses_analyses() {
        let t = build_t2(&LabeledPair::new("a", "b", Label::Similar), &corpus()).unwrap();
        assert_eq!((t.left.text(), t.right.text()), ("an a", "an b"));
        assert_eq!(
            build_t2(&LabeledPair::new("a", "z", Label::Similar), &corpus()),
            Err(TaskError::MissingAnalysis("z".into()))
        );
    }

    #[test]
    fn t3_dissimilar_crosses_stem_and_analysis() {
        let out = build_t3(&LabeledPair::new("a", "y", Label::Dissimilar), &corpus(), &mut pair_rng(1, 0), 1).unwrap();
        assert_eq!(out.pairs.len(), 3);
        let neg = &out.pairs[2];
        assert_eq!((neg.left.text(), neg.right.text(), neg.label), ("stem a", "an y", Label::Dissimilar));
    }

    #[test]
    fn t3_similar_samples_concept_peer() {
        for seed in 0..20 {
            let out = build_t3(&LabeledPair::new("a", "b", Label::Similar), &corpus(), &mut pair_rng(seed, 0), 1).unwrap();
            assert_eq!(out.flag, None);
            let neg = out.pairs.iter().find(|p| p.label == Label::Dissimilar).unwrap();
            // only x shares k1 and has an analysis
            assert_eq!(neg.origin.sampled_id.as_deref(), Some("x"));
            assert_eq!(neg.right.text(), "an x");
        }
    }

    #[test]
    fn t3_two_exercise_corpus_emits_positives_only() {
        let c = Corpus::new(vec![ex("a", "an a", &["k"]), ex("b", "an b", &["k"])]).unwrap();
        let out = build_t3(&LabeledPair::new("a", "b", Label::Similar), &c, &mut pair_rng(0, 0), 1).unwrap();
        assert_eq!(out.flag, Some(T3Flag::NoNegative));
        assert_eq!(out.pairs.len(), 2);
        assert!(out.pairs.iter().all(|p| p.label == Label::Similar));
    }

    #[test]
    fn t3_falls_back_to_uniform_sampling() {
        let c = Corpus::new(vec![ex("a", "an a", &["k"]), ex("b", "an b", &["k"]), ex("c", "an c", &["j"])]).unwrap();
        let out = build_t3(&LabeledPair::new("a", "b", Label::Similar), &c, &mut pair_rng(0, 0), 1).unwrap();
        assert_eq!(out.flag, Some(T3Flag::NoConceptPeer));
        assert!(out.pairs[2].origin.fallback);
    }

    #[test]
    fn negatives_without_replacement() {
        let c = Corpus::new((0..6).map(|i| ex(&format!("e{i}"), "an", &["k"])).collect()).unwrap();
        let out = build_t3(&LabeledPair::new("e0", "e1", Label::Similar), &c, &mut pair_rng(3, 0), 3).unwrap();
        let sampled: BTreeSet<_> = out.pairs.iter().filter_map(|p| p.origin.sampled_id.clone()).collect();
        assert_eq!(sampled.len(), 3);
        assert!(!sampled.contains("e0") && !sampled.contains("e1"));
    }

    #[test]
    fn build_tasks_counts() {
        let pairs = vec![
            LabeledPair::new("a", "b", Label::Similar),
            LabeledPair::new("a", "y", Label::Dissimilar),
            LabeledPair::new("a", "z", Label::Similar),
            LabeledPair::new("a", "nope", Label::Similar),
        ];
        let set = build_tasks(&pairs, &corpus(), 9, &TaskConfig::default());
        assert_eq!(set.stats.t1, 3);
        assert_eq!(set.stats.unknown_id, 1);
        assert_eq!(set.stats.t2, 2);
        assert_eq!(set.stats.missing_analysis, 1);
        assert_eq!(set.stats.t3, 6);
        assert_eq!(set, build_tasks(&pairs, &corpus(), 9, &TaskConfig::default()));
    }

    #[test]
    fn jsonl_round_trip() {
        let pairs = vec![LabeledPair::new("a", "b", Label::Similar)];
        let set = build_tasks(&pairs, &corpus(), 1, &TaskConfig::default());
        let mut buf = Vec::new();
        write_task_pairs(&mut buf, &set.pairs).unwrap();
        assert_eq!(read_task_pairs(buf.as_slice()).unwrap(), set.pairs);
    }

    #[test]
    fn batches_reject_mixed_tasks() {
        let set = build_tasks(&[LabeledPair::new("a", "b", Label::Similar)], &corpus(), 1, &TaskConfig::default());
        assert!(TaskBatch::new(TaskId::T1, set.pairs.clone()).is_err());
        let groups = group_by_task(&set.pairs);
        assert_eq!(groups[&TaskId::T3].len(), 3);
    }
}
