//! Ablation over pipeline variants on synthetic corpora, scored against the
//! generator's ground truth rather than the noisy labels.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::pipeline::run_pipeline;
use super::synth::{gen_synthetic, SyntheticSpec, CORPUS_FILE, PAIRS_FILE, TERMS_FILE};
use super::CliError;
use crate::corpus::{LabeledPair, Split};
use crate::eval::evaluate;
use crate::tasks::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// No normalization, T1 only.
    Baseline,
    /// Normalization, T1 only.
    Norm,
    /// All tasks, static uniform weights.
    MtlStatic,
    /// Static weights after confident-learning pruning.
    MtlStaticClean,
    /// All tasks, gated weights.
    Moe,
    /// Gated weights after confident-learning pruning.
    MoeClean,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Baseline,
        Variant::Norm,
        Variant::MtlStatic,
        Variant::MtlStaticClean,
        Variant::Moe,
        Variant::MoeClean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Norm => "+norm",
            Variant::MtlStatic => "+mtl",
            Variant::MtlStaticClean => "+mtl+cl",
            Variant::Moe => "+moe",
            Variant::MoeClean => "+moe+cl",
        }
    }

    /// `base` with this variant's switches applied.
    pub fn configure(self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        c.normalize.enabled = self != Variant::Baseline;
        c.tasks.enabled = match self {
            Variant::Baseline | Variant::Norm => vec![TaskId::T1],
            _ => TaskId::ALL.to_vec(),
        };
        c.moe.enabled = matches!(self, Variant::Moe | Variant::MoeClean);
        c.clean.enabled = matches!(self, Variant::MtlStaticClean | Variant::MoeClean);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub data_seed: u64,
    pub variant: Variant,
    /// Precision@k against true labels.
    pub p_at: BTreeMap<usize, f64>,
    /// Precision@k against the observed noisy labels.
    pub noisy_p_at: BTreeMap<usize, f64>,
    pub prune: Option<PruneStats>,
    /// Final gate weights.
    pub alphas: [f64; 3],
}

/// Pruning quality measured against the injected flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    pub pruned: usize,
    pub noise_estimate: f64,
    /// Fraction of pruned pairs whose label was flipped.
    pub precision: f64,
    /// Flip rate among T1 training pairs before pruning.
    pub noise_before: f64,
    /// Flip rate among T1 training pairs after pruning.
    pub noise_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rows: Vec<AblationRow>,
}

impl AblationSummary {
    /// Mean true-label P@k of a variant over data seeds.
    pub fn mean(&self, variant: Variant, k: usize) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant)
            .filter_map(|r| r.p_at.get(&k).copied())
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

/// Generates one corpus per data seed under `work_dir` and runs every
/// variant on it. `base` supplies model and training settings; its paths
/// are replaced.
pub fn run_ablation(
    spec: &SyntheticSpec,
    data_seeds: &[u64],
    variants: &[Variant],
    base: &PipelineConfig,
    work_dir: &Path,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationSummary, CliError> {
    let mut rows = Vec::new();
    for &seed in data_seeds {
        let data = gen_synthetic(&SyntheticSpec { seed, ..spec.clone() })?;
        let dir = work_dir.join(format!("seed{seed}"));
        data.write(&dir)?;
        let clean = data.clean_pairs();
        let flipped: BTreeMap<(String, String), bool> = data
            .pairs
            .iter()
            .zip(&data.flipped)
            .map(|(p, &f)| ((p.seed_id.clone(), p.candidate_id.clone()), f))
            .collect();
        for &variant in variants {
            let mut cfg = variant.configure(base);
            cfg.paths.corpus = dir.join(CORPUS_FILE);
            cfg.paths.pairs = dir.join(PAIRS_FILE);
            cfg.paths.terms = Some(dir.join(TERMS_FILE));
            cfg.paths.out = dir.join(format!("{variant:?}").to_lowercase());
            let out = run_pipeline(&cfg)?;
            let test_clean: Vec<&LabeledPair> = out.split.select(&clean, Split::Test);
            let report = evaluate(&out.model, &out.corpus, test_clean, &cfg.eval.ks)
                .map_err(|e| CliError::data("eval", e.to_string()))?;
            let row = AblationRow {
                data_seed: seed,
                variant,
                p_at: report.p_at,
                noisy_p_at: out.report.p_at,
                prune: out.prune.as_ref().map(|r| {
                    let is_flipped = |k: &(String, String)| flipped.get(k).copied().unwrap_or(false);
                    let hits = r.pruned_pairs.iter().filter(|k| is_flipped(k)).count();
                    let train: Vec<(String, String)> = out
                        .split
                        .select(&out.pairs, Split::Train)
                        .iter()
                        .map(|p| (p.seed_id.clone(), p.candidate_id.clone()))
                        .collect();
                    let before = train.iter().filter(|k| is_flipped(k)).count();
                    let pruned: BTreeSet<&(String, String)> = r.pruned_pairs.iter().collect();
                    let kept = train.len() - pruned.len();
                    PruneStats {
                        pruned: r.pruned,
                        noise_estimate: r.noise_rate_estimate,
                        precision: hits as f64 / r.pruned.max(1) as f64,
                        noise_before: before as f64 / train.len().max(1) as f64,
                        noise_after: (before - hits) as f64 / kept.max(1) as f64,
                    }
                }),
                alphas: out.train.log.last().map(|l| l.alphas).unwrap_or_default(),
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(AblationSummary { rows })
}

/// Model and training settings used for ablation runs.
pub fn default_config_toml() -> String {
    "[model]\ndim = 16\nmin_freq = 1\n\n[train]\nepochs = 10\nlr = 0.01\n".to_string()
}
