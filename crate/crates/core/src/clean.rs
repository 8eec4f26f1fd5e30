//! Confident learning over binary pair labels.
//!
//! Out-of-sample probabilities come from models trained on the other folds.
//! Class thresholds are the mean self-confidence of each noisy class; a
//! record counts toward `C[noisy][j]` for the most probable class `j` whose
//! probability reaches its threshold. Off-diagonal counts say how many
//! records of each noisy class to prune.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::tasks::{TaskId, TaskPair};

pub const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CleanError {
    #[error("cross-validation needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{seeds} seed ids cannot fill {folds} folds")]
    TooFewSeeds { seeds: usize, folds: usize },
    #[error("no record has noisy label {0}")]
    MissingClass(usize),
    #[error("record {index}: probabilities {probs:?} are not a distribution")]
    InvalidProbability { index: usize, probs: [f64; 2] },
    #[error("the confident joint is empty")]
    EmptyJoint,
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord {
    pub index: usize,
    pub noisy_label: Label,
    /// `[p(dissimilar), p(similar)]`
    pub probs: [f64; 2],
}

impl ProbRecord {
    pub fn new(index: usize, noisy_label: Label, probs: [f64; 2]) -> Result<Self, CleanError> {
        let ok = probs.iter().all(|p| (0.0..=1.0).contains(p)) && (probs[0] + probs[1] - 1.0).abs() <= PROB_TOLERANCE;
        if !ok {
            return Err(CleanError::InvalidProbability { index, probs });
        }
        Ok(ProbRecord {
            index,
            noisy_label,
            probs,
        })
    }

    /// Record from the probability of the similar class.
    pub fn from_p_similar(index: usize, noisy_label: Label, p1: f64) -> Result<Self, CleanError> {
        ProbRecord::new(index, noisy_label, [1.0 - p1, p1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentJoint {
    /// `counts[noisy][estimated true]`
    pub counts: [[u64; 2]; 2],
    pub thresholds: [f64; 2],
}

impl ConfidentJoint {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn off_diagonal(&self) -> u64 {
        self.counts[0][1] + self.counts[1][0]
    }

    pub fn is_diagonal(&self) -> bool {
        self.off_diagonal() == 0
    }
}

/// Estimated true class: the most probable class reaching its threshold.
/// Ties go to the lower class. `None` when no class qualifies.
pub fn estimated_class(probs: [f64; 2], thresholds: [f64; 2]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..2 {
        if probs[j] >= thresholds[j] && best.is_none_or(|b| probs[j] > probs[b]) {
            best = Some(j);
        }
    }
    best
}

pub fn class_thresholds(records: &[ProbRecord]) -> Result<[f64; 2], CleanError> {
    let mut sum = [0.0; 2];
    let mut n = [0usize; 2];
    for r in records {
        let j = r.noisy_label.index();
        sum[j] += r.probs[j];
        n[j] += 1;
    }
    if let Some(j) = n.iter().position(|&c| c == 0) {
        return Err(CleanError::MissingClass(j));
    }
    Ok([sum[0] / n[0] as f64, sum[1] / n[1] as f64])
}

pub fn confident_joint(records: &[ProbRecord]) -> Result<ConfidentJoint, CleanError> {
    let thresholds = class_thresholds(records)?;
    let mut counts = [[0u64; 2]; 2];
    for r in records {
        if let Some(j) = estimated_class(r.probs, thresholds) {
            counts[r.noisy_label.index()][j] += 1;
        }
    }
    Ok(ConfidentJoint { counts, thresholds })
}

/// Fraction of off-diagonal mass in the joint.
pub fn noise_rate_estimate(joint: &ConfidentJoint) -> Result<f64, CleanError> {
    match joint.total() {
        0 => Err(CleanError::EmptyJoint),
        total => Ok(joint.off_diagonal() as f64 / total as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStrategy {
    /// Remove `C[i][j]` records labeled `i` with the largest `pⱼ`.
    #[default]
    PruneByCount,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Record indices, ascending.
    pub kept: Vec<usize>,
    pub pruned: Vec<usize>,
}

pub fn prune(records: &[ProbRecord], joint: &ConfidentJoint, strategy: PruneStrategy) -> PruneResult {
    let PruneStrategy::PruneByCount = strategy;
    let mut pruned: BTreeSet<usize> = BTreeSet::new();
    for i in 0..2 {
        for j in 0..2 {
            let n = joint.counts[i][j] as usize;
            if i == j || n == 0 {
                continue;
            }
            let mut labeled: Vec<&ProbRecord> = records.iter().filter(|r| r.noisy_label.index() == i).collect();
            labeled.sort_by(|a, b| b.probs[j].total_cmp(&a.probs[j]).then(a.index.cmp(&b.index)));
            pruned.extend(labeled.iter().take(n).map(|r| r.index));
        }
    }
    let kept = records
        .iter()
        .map(|r| r.index)
        .filter(|i| !pruned.contains(i))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    PruneResult {
        kept,
        pruned: pruned.into_iter().collect(),
    }
}

/// Training pairs and held-out pairs of one cross-validation fold.
#[derive(Debug, Clone)]
pub struct Fold<'a> {
    pub fold: usize,
    pub train_seeds: BTreeSet<&'a str>,
    pub train: Vec<&'a TaskPair>,
    pub heldout: Vec<&'a TaskPair>,
}

/// Seed id → fold, by a seeded shuffle of the sorted seed ids dealt round-robin.
pub fn assign_folds<'a>(
    seeds: impl IntoIterator<Item = &'a str>,
    k: usize,
    rng_seed: u64,
) -> Result<BTreeMap<&'a str, usize>, CleanError> {
    if k < 2 {
        return Err(CleanError::TooFewFolds(k));
    }
    let unique: BTreeSet<&str> = seeds.into_iter().collect();
    if unique.len() < k {
        return Err(CleanError::TooFewSeeds {
            seeds: unique.len(),
            folds: k,
        });
    }
    let mut order: Vec<&str> = unique.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    Ok(order.into_iter().enumerate().map(|(i, s)| (s, i % k)).collect())
}

/// Out-of-sample probabilities for every T1 pair in `pairs`.
///
/// `train_fn` receives a fold and returns `p(similar)` for each held-out pair,
/// in order. Folds run in parallel; the output follows the T1 order of `pairs`
/// and each record's `index` is the pair's position among the T1 pairs.
pub fn cross_val_probs<F>(pairs: &[TaskPair], k: usize, rng_seed: u64, train_fn: F) -> Result<Vec<ProbRecord>, CleanError>
where
    F: Fn(&Fold<'_>) -> Result<Vec<f64>, String> + Sync,
{
    let t1: Vec<&TaskPair> = pairs.iter().filter(|p| p.task == TaskId::T1).collect();
    let folds = assign_folds(t1.iter().map(|p| p.origin.seed_id.as_str()), k, rng_seed)?;
    let fold_of = |p: &TaskPair| folds.get(p.origin.seed_id.as_str()).copied();

    let results: Vec<Result<Vec<(usize, f64)>, CleanError>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let heldout_idx: Vec<usize> = (0..t1.len()).filter(|&i| fold_of(t1[i]) == Some(fold)).collect();
            let input = Fold {
                fold,
                train_seeds: folds.iter().filter(|(_, f)| **f != fold).map(|(s, _)| *s).collect(),
                // pairs of seeds outside the T1 set have no fold and are used for training
                train: pairs.iter().filter(|p| fold_of(p) != Some(fold)).collect(),
                heldout: heldout_idx.iter().map(|&i| t1[i]).collect(),
            };
            let probs = train_fn(&input).map_err(|message| CleanError::Fold { fold, message })?;
            if probs.len() != heldout_idx.len() {
                return Err(CleanError::Fold {
                    fold,
                    message: format!("expected {} probabilities, got {}", heldout_idx.len(), probs.len()),
                });
            }
            Ok(heldout_idx.into_iter().zip(probs).collect())
        })
        .collect();

    let mut by_index: BTreeMap<usize, f64> = BTreeMap::new();
    for r in results {
        by_index.extend(r?);
    }
    by_index
        .into_iter()
        .map(|(i, p)| ProbRecord::from_p_similar(i, t1[i].label, p))
        .collect()
}

/// Keeps task pairs whose originating labeled pair was not pruned.
pub fn drop_pruned(pairs: &[TaskPair], pruned: &BTreeSet<(String, String)>) -> Vec<TaskPair> {
    pairs
        .iter()
        .filter(|p| !pruned.contains(&(p.origin.seed_id.clone(), p.origin.candidate_id.clone())))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub confident_joint: [[u64; 2]; 2],
    pub thresholds: [f64; 2],
    pub noise_rate_estimate: f64,
    pub records: usize,
    pub pruned: usize,
    /// `(seed_id, candidate_id)` of each pruned T1 pair.
    pub pruned_pairs: Vec<(String, String)>,
}

/// Joint, pruning and report for the T1 pairs of `pairs` given their records.
pub fn clean_pairs(pairs: &[TaskPair], records: &[ProbRecord]) -> Result<(Vec<TaskPair>, PruneReport), CleanError> {
    let t1: Vec<&TaskPair> = pairs.iter().filter(|p| p.task == TaskId::T1).collect();
    let joint = confident_joint(records)?;
    let result = prune(records, &joint, PruneStrategy::PruneByCount);
    let pruned_pairs: Vec<(String, String)> = result
        .pruned
        .iter()
        .map(|&i| (t1[i].origin.seed_id.clone(), t1[i].origin.candidate_id.clone()))
        .collect();
    let keys: BTreeSet<(String, String)> = pruned_pairs.iter().cloned().collect();
    let kept = drop_pruned(pairs, &keys);
    let report = PruneReport {
        confident_joint: joint.counts,
        thresholds: joint.thresholds,
        noise_rate_estimate: noise_rate_estimate(&joint)?,
        records: records.len(),
        pruned: result.pruned.len(),
        pruned_pairs,
    };
    Ok((kept, report))
}
