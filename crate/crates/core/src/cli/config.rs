//! Declarative pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::clean::PruneStrategy;
use crate::corpus::DEFAULT_RATIOS;
use crate::eval::DEFAULT_KS;
use crate::model::{ModelConfig, TrainConfig, WeightingMode};
use crate::moe::TaskWeights;
use crate::tasks::{TaskConfig, TaskId};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Raw exercise JSONL.
    pub corpus: PathBuf,
    /// Labeled pairs TSV.
    pub pairs: PathBuf,
    /// Term table TSV; none means an empty table.
    pub terms: Option<PathBuf>,
    /// Output directory for all artifacts.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizeSection {
    /// Off keeps every text verbatim.
    pub enabled: bool,
    pub lenient: bool,
}

impl Default for NormalizeSection {
    fn default() -> Self {
        NormalizeSection {
            enabled: true,
            lenient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: DEFAULT_RATIOS,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TasksSection {
    /// Tasks used in training; T1 is required.
    pub enabled: Vec<TaskId>,
    pub t3_negatives: usize,
    pub seed: u64,
}

impl Default for TasksSection {
    fn default() -> Self {
        TasksSection {
            enabled: TaskId::ALL.to_vec(),
            t3_negatives: TaskConfig::default().t3_negatives,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub dim: usize,
    pub layers: usize,
    pub min_freq: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            dim: m.dim,
            layers: m.layers,
            min_freq: m.min_freq,
            seed: m.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoeSection {
    /// Off trains with `static_alphas`.
    pub enabled: bool,
    /// Keeps gates at their initial uniform output.
    pub frozen: bool,
    pub static_alphas: [f64; 3],
    /// Gate hidden widths; empty means `[4d, 2d]`.
    pub hidden: Vec<usize>,
    pub shared: bool,
    /// Multiplier on the gate learning rate.
    pub gate_lr_scale: f64,
}

impl Default for MoeSection {
    fn default() -> Self {
        MoeSection {
            enabled: true,
            frozen: false,
            static_alphas: TaskWeights::uniform().alphas(),
            hidden: Vec::new(),
            shared: false,
            gate_lr_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanSection {
    pub enabled: bool,
    pub folds: usize,
    pub seed: u64,
    pub strategy: PruneStrategy,
    /// Training epochs of each fold model; none uses `train.epochs`.
    pub epochs: Option<usize>,
}

impl Default for CleanSection {
    fn default() -> Self {
        CleanSection {
            enabled: false,
            folds: 4,
            seed: 17,
            strategy: PruneStrategy::PruneByCount,
            epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { ks: DEFAULT_KS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub normalize: NormalizeSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub tasks: TasksSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub moe: MoeSection,
    #[serde(default)]
    pub clean: CleanSection,
    #[serde(default)]
    pub eval: EvalSection,
}

impl PipelineConfig {
    /// Config with default sections over the given inputs.
    pub fn with_paths(corpus: impl Into<PathBuf>, pairs: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            paths: PathsSection {
                corpus: corpus.into(),
                pairs: pairs.into(),
                terms: None,
                out: out.into(),
            },
            normalize: NormalizeSection::default(),
            split: SplitSection::default(),
            tasks: TasksSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            moe: MoeSection::default(),
            clean: CleanSection::default(),
            eval: EvalSection::default(),
        }
    }

    /// Parses TOML, applies `key.path=value` overrides, then validates.
    /// Relative paths resolve against `base`.
    pub fn parse(src: &str, overrides: &[String], base: &Path) -> Result<Self, CliError> {
        let mut doc: toml::Table = src.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&src, overrides, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Errors unless corpus, pairs and output paths are all set.
    pub fn require_paths(&self) -> Result<(), CliError> {
        let p = &self.paths;
        for (name, v) in [("corpus", &p.corpus), ("pairs", &p.pairs), ("out", &p.out)] {
            if v.as_os_str().is_empty() {
                return Err(CliError::Config(format!("paths.{name} is required")));
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.pairs);
        fix(&mut self.paths.out);
        if let Some(t) = self.paths.terms.as_mut() {
            fix(t);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !self.tasks.enabled.contains(&TaskId::T1) {
            return bad("tasks.enabled must include T1");
        }
        if self.model.dim == 0 || self.train.batch_size == 0 {
            return bad("model.dim and train.batch_size must be positive");
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return bad("train.lr must be positive");
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks must hold positive values");
        }
        if self.clean.enabled && self.clean.folds < 2 {
            return bad("clean.folds must be at least 2");
        }
        if !(self.moe.gate_lr_scale >= 0.0 && self.moe.gate_lr_scale.is_finite()) {
            return bad("moe.gate_lr_scale must be non-negative");
        }
        if !self.moe.enabled {
            TaskWeights::new(self.moe.static_alphas).map_err(|e| CliError::Config(format!("moe.static_alphas: {e}")))?;
        }
        let r = self.split.ratios;
        if r.iter().any(|x| x.is_nan() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split.ratios must be non-negative and sum to 1");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.model.dim,
            layers: self.model.layers,
            min_freq: self.model.min_freq,
            seed: self.model.seed,
            gate_hidden: self.moe.hidden.clone(),
            shared_gate: self.moe.shared,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            seed: self.train.seed,
            weighting: if self.moe.enabled {
                WeightingMode::Moe { frozen: self.moe.frozen }
            } else {
                WeightingMode::Static {
                    alphas: self.moe.static_alphas,
                }
            },
            tasks: self.tasks.enabled.clone(),
            gate_lr_scale: self.moe.gate_lr_scale,
        }
    }

    /// Training settings of the cross-validation scorers: the enabled tasks
    /// under the static weights, `clean.epochs` when set.
    pub fn fold_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.clean.epochs.unwrap_or(self.train.epochs),
            weighting: WeightingMode::Static {
                alphas: self.moe.static_alphas,
            },
            ..self.train_config()
        }
    }

    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            t3_negatives: self.tasks.t3_negatives,
        }
    }
}

/// Sets a dotted key. The value is read as a TOML value when it parses as
/// one and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {key:?}")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key:?}: {p:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "[paths]\ncorpus = \"c.jsonl\"\npairs = \"p.tsv\"\nout = \"out\"\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let c = PipelineConfig::parse(MIN, &[], Path::new("/base")).unwrap();
        assert_eq!(c.paths.corpus, Path::new("/base/c.jsonl"));
        assert_eq!(c.eval.ks, vec![1, 3, 5]);
        assert!(c.moe.enabled && !c.clean.enabled);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = format!("{MIN}[model]\ndims = 3\n");
        assert!(matches!(PipelineConfig::parse(&src, &[], Path::new(".")), Err(CliError::Config(_))));
        let src = format!("{MIN}[extra]\n");
        assert!(PipelineConfig::parse(&src, &[], Path::new(".")).is_err());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = PipelineConfig::parse(
            MIN,
            &[
                "model.dim=8".into(),
                "clean.enabled=true".into(),
                "tasks.enabled=[\"T1\"]".into(),
                "paths.out=elsewhere".into(),
            ],
            Path::new("/b"),
        )
        .unwrap();
        assert_eq!(c.model.dim, 8);
        assert!(c.clean.enabled);
        assert_eq!(c.tasks.enabled, vec![TaskId::T1]);
        assert_eq!(c.paths.out, Path::new("/b/elsewhere"));
        assert!(PipelineConfig::parse(MIN, &["tasks.enabled=[\"T2\"]".into()], Path::new(".")).is_err());
        assert!(PipelineConfig::parse(MIN, &["nokey".into()], Path::new(".")).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = PipelineConfig::with_paths("/c", "/p", "/o");
        let back = PipelineConfig::parse(&c.to_toml(), &[], Path::new("/")).unwrap();
        assert_eq!(back, c);
    }
}
