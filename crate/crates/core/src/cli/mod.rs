//! Command-line front end. Exit codes: 0 success, 1 usage or configuration,
//! 2 data error, 3 numeric failure.

pub mod ablation;
pub mod config;
pub mod pipeline;
pub mod synth;

use std::ffi::OsString;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, Manifest, RunOutput};
pub use synth::{gen_synthetic, SyntheticData, SyntheticSpec};

use crate::corpus::{load_pairs, pairs_to_tsv, parse_corpus, split_by_seed, Split};
use crate::eval::{build_candidates, evaluate, export_embeddings, Bm25Index, CandidateMix, DEFAULT_B, DEFAULT_K1};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::normalizer::Normalizer;
use crate::tasks::{build_tasks, read_task_pairs, TaskConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("stage {stage}: {message}")]
    Data { stage: String, message: String },
    #[error("stage {stage}: numeric failure: {message}")]
    Numeric { stage: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn data(stage: &str, message: impl Into<String>) -> Self {
        CliError::Data {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::InvalidSpec(_) => 1,
            CliError::Data { .. } | CliError::Io { .. } => 2,
            CliError::Numeric { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fse", version, about = "Finding similar exercises: normalize, train, prune and evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Bm25,
    Random,
    RandomWithConcept,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize raw exercise JSONL (stdin or --input) into canonical JSONL.
    Normalize {
        #[arg(long)]
        terms: Option<PathBuf>,
        /// Keep unparseable formulas verbatim.
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split labeled pairs by seed exercise into train/valid/test.
    Split {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Build T1/T2/T3 task pairs from labeled pairs over a normalized corpus.
    BuildPairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        t3_negatives: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prune likely mislabeled pairs by cross-validated confident learning.
    Prune {
        #[arg(long)]
        tasks: PathBuf,
        /// Normalized corpus for the vocabulary; task texts are used otherwise.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Pipeline config supplying model and training settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train a pair scorer on task pairs and write a checkpoint directory.
    Train {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank each seed's judged candidates and report Precision@k.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5])]
        k: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate candidate sets for seed exercises.
    Candidates {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Bm25)]
        strategy: Strategy,
        #[arg(long, default_value_t = 15)]
        top: usize,
        /// Seed exercise ids; all exercises when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<String>,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export exercise embeddings as TSV.
    ExportEmb {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with injected label noise.
    GenSynth {
        #[arg(long, default_value_t = 200)]
        templates: usize,
        #[arg(long, default_value_t = 3)]
        per_template: usize,
        #[arg(long, default_value_t = 0.15)]
        flip_rate: f64,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        candidates: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from one config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `section.key=value` override; repeatable.
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    crate::atomic_write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_tasks(path: &Path) -> Result<Vec<crate::tasks::TaskPair>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_task_pairs(BufReader::new(f)).map_err(|e| CliError::data("tasks", e.to_string()))
}

fn optional_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::load(p, overrides),
        None => PipelineConfig::parse("", overrides, Path::new(".")),
    }
}

fn vocab_source(corpus: Option<&Path>, tasks: &[crate::tasks::TaskPair], min_freq: usize) -> Result<crate::model::Vocab, CliError> {
    Ok(match corpus {
        Some(c) => pipeline::corpus_vocab(&pipeline::read_corpus(c)?, min_freq),
        None => crate::model::vocab_for(tasks, min_freq),
    })
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Normalize {
            terms,
            lenient,
            input,
            output,
        } => {
            let n = Normalizer::new(pipeline::load_terms(terms.as_deref())?).lenient(lenient);
            let corpus = match input {
                Some(p) => pipeline::normalize_corpus(&p, Some(&n))?,
                None => {
                    let mut buf = String::new();
                    std::io::stdin()
                        .read_to_string(&mut buf)
                        .map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
                    parse_corpus(buf.as_bytes(), Some(&n)).map_err(|e| CliError::data("normalize", e.to_string()))?
                }
            };
            let bytes = pipeline::corpus_jsonl(&corpus);
            match output {
                Some(p) => write_out(&p, &bytes),
                None => std::io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
            }
        }
        Command::Split { pairs, ratios, seed, out } => {
            let ratios: [f64; 3] = ratios
                .try_into()
                .map_err(|_| CliError::Usage("--ratios takes three values".into()))?;
            let pairs = load_pairs(&pairs).map_err(|e| CliError::data("split", e.to_string()))?;
            let split = split_by_seed(&pairs, ratios, seed).map_err(|e| CliError::data("split", e.to_string()))?;
            write_out(&out.join("split.tsv"), split.to_tsv().as_bytes())?;
            for s in Split::ALL {
                write_out(&out.join(format!("{}.tsv", s.name())), pairs_to_tsv(split.select(&pairs, s)).as_bytes())?;
            }
            let [tr, va, te] = split.seed_counts();
            eprintln!("seeds: train {tr}, valid {va}, test {te}");
            Ok(())
        }
        Command::BuildPairs {
            corpus,
            pairs,
            seed,
            t3_negatives,
            out,
        } => {
            let corpus = pipeline::read_corpus(&corpus)?;
            let pairs = load_pairs(&pairs).map_err(|e| CliError::data("build-pairs", e.to_string()))?;
            let set = build_tasks(&pairs, &corpus, seed, &TaskConfig { t3_negatives });
            write_out(&out, &pipeline::tasks_jsonl(&set.pairs))?;
            eprintln!("{}", serde_json::to_string(&set.stats).expect("stats serialize"));
            Ok(())
        }
        Command::Prune {
            tasks,
            corpus,
            folds,
            seed,
            config,
            overrides,
            out,
            report,
        } => {
            let cfg = optional_config(config.as_deref(), &overrides)?;
            let tasks = read_tasks(&tasks)?;
            let model_cfg = cfg.model_config();
            let vocab = vocab_source(corpus.as_deref(), &tasks, model_cfg.min_freq)?;
            let (kept, rep) = pipeline::prune_tasks(&tasks, &vocab, &model_cfg, &cfg.fold_train_config(), folds, seed)?;
            write_out(&out, &pipeline::tasks_jsonl(&kept))?;
            write_out(&report, (serde_json::to_string_pretty(&rep).expect("report serializes") + "\n").as_bytes())?;
            eprintln!("pruned {} of {} T1 pairs", rep.pruned, rep.records);
            Ok(())
        }
        Command::Train {
            tasks,
            corpus,
            config,
            overrides,
            out,
        } => {
            let cfg = optional_config(config.as_deref(), &overrides)?;
            let tasks = read_tasks(&tasks)?;
            let model_cfg = cfg.model_config();
            let vocab = vocab_source(corpus.as_deref(), &tasks, model_cfg.min_freq)?;
            let (model, rep) = pipeline::train_model(vocab, &model_cfg, &cfg.train_config(), &tasks)
                .map_err(|e| pipeline::model_error("train", e))?;
            save_checkpoint(&model, &out).map_err(|e| pipeline::model_error("train", e))?;
            write_out(&out.join("alpha.csv"), rep.alpha_csv().as_bytes())?;
            if let Some(last) = rep.epoch_losses.last() {
                eprintln!("trained {} steps, final epoch loss {last:.6}", rep.steps);
            }
            Ok(())
        }
        Command::Eval {
            ckpt,
            corpus,
            pairs,
            k,
            report,
        } => {
            let model = load_checkpoint(&ckpt).map_err(|e| pipeline::model_error("eval", e))?;
            let corpus = pipeline::read_corpus(&corpus)?;
            let pairs = load_pairs(&pairs).map_err(|e| CliError::data("eval", e.to_string()))?;
            let rep = evaluate(&model, &corpus, &pairs, &k).map_err(|e| CliError::data("eval", e.to_string()))?;
            let json = serde_json::to_string_pretty(&rep).expect("report serializes") + "\n";
            match report {
                Some(p) => write_out(&p, json.as_bytes())?,
                None => print!("{json}"),
            }
            Ok(())
        }
        Command::Candidates {
            corpus,
            strategy,
            top,
            seeds,
            seed,
            out,
        } => {
            let corpus = pipeline::read_corpus(&corpus)?;
            let index = Bm25Index::build(&corpus, DEFAULT_K1, DEFAULT_B).map_err(|e| CliError::data("candidates", e.to_string()))?;
            let mix = match strategy {
                Strategy::Bm25 => CandidateMix {
                    bm25: top,
                    random_with_concept: 0,
                    random: 0,
                },
                Strategy::Random => CandidateMix {
                    bm25: 0,
                    random_with_concept: 0,
                    random: top,
                },
                Strategy::RandomWithConcept => CandidateMix {
                    bm25: 0,
                    random_with_concept: top,
                    random: 0,
                },
            };
            let ids: Vec<String> = if seeds.is_empty() {
                corpus.iter().map(|e| e.id.clone()).collect()
            } else {
                seeds
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tsv = String::from("seed_id\tcandidate_id\tprovenance\n");
            for id in &ids {
                let ex = corpus.get(id).ok_or_else(|| CliError::data("candidates", format!("unknown exercise id {id:?}")))?;
                let set = build_candidates(&index, &corpus, ex, mix, &mut rng)
                    .map_err(|e| CliError::data("candidates", e.to_string()))?;
                for c in &set.candidates {
                    let prov = serde_json::to_value(c.provenance).expect("provenance serializes");
                    tsv.push_str(&format!("{}\t{}\t{}\n", set.seed_id, c.id, prov.as_str().unwrap_or_default()));
                }
            }
            match out {
                Some(p) => write_out(&p, tsv.as_bytes()),
                None => {
                    print!("{tsv}");
                    Ok(())
                }
            }
        }
        Command::ExportEmb { ckpt, corpus, ids, out } => {
            let model = load_checkpoint(&ckpt).map_err(|e| pipeline::model_error("export-emb", e))?;
            let corpus = pipeline::read_corpus(&corpus)?;
            let tsv = export_embeddings(&model, &corpus, &ids).map_err(|e| CliError::data("export-emb", e.to_string()))?;
            write_out(&out, tsv.as_bytes())
        }
        Command::GenSynth {
            templates,
            per_template,
            flip_rate,
            seed,
            candidates,
            out,
        } => {
            let spec = SyntheticSpec {
                templates,
                per_template,
                flip_rate,
                seed,
                candidates,
            };
            let data = gen_synthetic(&spec)?;
            data.write(&out)?;
            eprintln!(
                "{} exercises, {} pairs, {} labels flipped",
                data.exercises.len(),
                data.pairs.len(),
                data.flip_count()
            );
            Ok(())
        }
        Command::Run { config, overrides } => {
            let cfg = PipelineConfig::load(&config, &overrides)?;
            let out = run_pipeline(&cfg)?;
            let p: Vec<String> = out.report.p_at.iter().map(|(k, v)| format!("P@{k}={v:.4}")).collect();
            eprintln!("{} test seeds: {}", out.report.n_seeds, p.join(" "));
            Ok(())
        }
    }
}
