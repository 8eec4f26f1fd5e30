//! Pipeline stages and the end-to-end run.
//!
//! Every artifact goes through [`Artifacts`], which writes atomically and
//! records a SHA-256 digest for the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::CliError;
use crate::clean::{self, cross_val_probs, Fold, PruneReport};
use crate::corpus::{load_pairs, pairs_to_tsv, parse_corpus, Corpus, LabeledPair, Split, SplitAssignment};
use crate::eval::{evaluate, EvalReport};
use crate::model::{self, checkpoint_json, Model, ModelConfig, ModelError, TrainConfig, TrainReport, Vocab};
use crate::normalizer::{CanonicalText, Normalizer, TermTable};
use crate::tasks::{build_tasks, write_task_pairs, TaskId, TaskPair, TaskSet};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Artifact path (relative to the output directory) → SHA-256 hex digest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, String>,
}

/// Atomic writer rooted at an output directory.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    manifest: Manifest,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Artifacts {
            root: root.to_path_buf(),
            manifest: Manifest::default(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        crate::atomic_write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Writes the manifest itself, which is not listed in it.
    pub fn finish(self) -> Result<Manifest, CliError> {
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        let path = self.root.join(MANIFEST_FILE);
        crate::atomic_write(&path, json.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}

pub fn model_error(stage: &str, e: ModelError) -> CliError {
    match e {
        ModelError::NumericFailure(m) => CliError::Numeric {
            stage: stage.to_string(),
            message: m,
        },
        other => CliError::data(stage, other.to_string()),
    }
}

fn data<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::data(stage, e.to_string())
}

pub fn load_terms(path: Option<&Path>) -> Result<TermTable, CliError> {
    match path {
        Some(p) => TermTable::load(p).map_err(data("normalize")),
        None => Ok(TermTable::default()),
    }
}

/// Reads raw exercises and normalizes them, or keeps them verbatim when
/// `normalizer` is `None`.
pub fn normalize_corpus(path: &Path, normalizer: Option<&Normalizer>) -> Result<Corpus, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data("normalize", format!("{}: {e}", path.display())))?;
    parse_corpus(std::io::BufReader::new(file), normalizer).map_err(data("normalize"))
}

/// Reads an already normalized corpus.
pub fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data("corpus", format!("{}: {e}", path.display())))?;
    parse_corpus(std::io::BufReader::new(file), None).map_err(data("corpus"))
}

pub fn corpus_jsonl(corpus: &Corpus) -> Vec<u8> {
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf).expect("writing to memory");
    buf
}

/// Vocabulary over every stem, option and analysis in the corpus. Labels
/// play no part, so held-out exercises get their own tokens.
pub fn corpus_vocab(corpus: &Corpus, min_freq: usize) -> Vocab {
    let texts: Vec<CanonicalText> = corpus
        .iter()
        .flat_map(|e| [e.stem_with_options(), e.analysis.clone()])
        .collect();
    Vocab::build(&texts, min_freq)
}

pub fn train_model(
    vocab: Vocab,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    pairs: &[TaskPair],
) -> Result<(Model, TrainReport), ModelError> {
    let mut m = Model::new(model_cfg.clone(), vocab);
    let report = model::train(&mut m, pairs, train_cfg, |_| {})?;
    Ok((m, report))
}

/// Cross-validated confident learning over the T1 pairs of `tasks`. Each
/// fold model trains on every task pair whose seed lies outside the fold.
pub fn prune_tasks(
    tasks: &[TaskPair],
    vocab: &Vocab,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    folds: usize,
    seed: u64,
) -> Result<(Vec<TaskPair>, PruneReport), CliError> {
    let fit = |fold: &Fold<'_>| -> Result<Vec<f64>, String> {
        let train: Vec<TaskPair> = fold.train.iter().map(|p| (*p).clone()).collect();
        let (m, _) = train_model(vocab.clone(), model_cfg, train_cfg, &train).map_err(|e| e.to_string())?;
        Ok(fold.heldout.iter().map(|p| m.score_pair(TaskId::T1, &p.left, &p.right)).collect())
    };
    let records = cross_val_probs(tasks, folds, seed, fit).map_err(data("prune"))?;
    clean::clean_pairs(tasks, &records).map_err(data("prune"))
}

pub fn tasks_jsonl(pairs: &[TaskPair]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_task_pairs(&mut buf, pairs).expect("writing to memory");
    buf
}

/// Everything a run produced, for callers that keep going in process.
#[derive(Debug)]
pub struct RunOutput {
    pub corpus: Corpus,
    pub pairs: Vec<LabeledPair>,
    pub split: SplitAssignment,
    pub tasks: TaskSet,
    pub prune: Option<PruneReport>,
    pub model: Model,
    pub train: TrainReport,
    pub report: EvalReport,
    pub manifest: Manifest,
}

impl RunOutput {
    pub fn pairs_in(&self, split: Split) -> Vec<&LabeledPair> {
        self.split.select(&self.pairs, split)
    }
}

/// normalize → split → build-pairs → prune (optional) → train → eval.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    cfg.require_paths()?;
    let mut out = Artifacts::new(&cfg.paths.out)?;

    let corpus = if cfg.normalize.enabled {
        let terms = load_terms(cfg.paths.terms.as_deref())?;
        let n = Normalizer::new(terms).lenient(cfg.normalize.lenient);
        normalize_corpus(&cfg.paths.corpus, Some(&n))?
    } else {
        normalize_corpus(&cfg.paths.corpus, None)?
    };
    out.write("corpus.jsonl", &corpus_jsonl(&corpus))?;

    let pairs = load_pairs(&cfg.paths.pairs).map_err(data("split"))?;
    let split = crate::corpus::split_by_seed(&pairs, cfg.split.ratios, cfg.split.seed).map_err(data("split"))?;
    out.write("split.tsv", split.to_tsv().as_bytes())?;
    for s in Split::ALL {
        out.write(&format!("{}.tsv", s.name()), pairs_to_tsv(split.select(&pairs, s)).as_bytes())?;
    }

    let train_pairs: Vec<LabeledPair> = split.select(&pairs, Split::Train).into_iter().cloned().collect();
    let task_set = build_tasks(&train_pairs, &corpus, cfg.tasks.seed, &cfg.task_config());
    if task_set.stats.t1 == 0 {
        return Err(CliError::data("build-pairs", "no T1 pairs in the training split"));
    }
    out.write("tasks.jsonl", &tasks_jsonl(&task_set.pairs))?;

    let model_cfg = cfg.model_config();
    let train_cfg = cfg.train_config();
    let vocab = corpus_vocab(&corpus, model_cfg.min_freq);

    let (train_tasks, prune) = if cfg.clean.enabled {
        let (kept, report) = prune_tasks(
            &task_set.pairs,
            &vocab,
            &model_cfg,
            &cfg.fold_train_config(),
            cfg.clean.folds,
            cfg.clean.seed,
        )?;
        out.write("tasks.clean.jsonl", &tasks_jsonl(&kept))?;
        out.write(
            "prune_report.json",
            (serde_json::to_string_pretty(&report).expect("report serializes") + "\n").as_bytes(),
        )?;
        (kept, Some(report))
    } else {
        (task_set.pairs.clone(), None)
    };

    let (model, train) = train_model(vocab, &model_cfg, &train_cfg, &train_tasks).map_err(|e| model_error("train", e))?;
    out.write("ckpt/model.json", checkpoint_json(&model).as_bytes())?;
    out.write("ckpt/alpha.csv", train.alpha_csv().as_bytes())?;

    let test: Vec<&LabeledPair> = split.select(&pairs, Split::Test);
    let report = evaluate(&model, &corpus, test, &cfg.eval.ks).map_err(data("eval"))?;
    out.write(
        "report.json",
        (serde_json::to_string_pretty(&report).expect("report serializes") + "\n").as_bytes(),
    )?;
    out.write("config.toml", cfg.to_toml().as_bytes())?;

    let manifest = out.finish()?;
    Ok(RunOutput {
        corpus,
        pairs,
        split,
        tasks: task_set,
        prune,
        model,
        train,
        report,
        manifest,
    })
}
