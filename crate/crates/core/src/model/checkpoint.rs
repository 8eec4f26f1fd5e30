//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! reloaded model is bit-identical to the saved one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ParamSet, Vocab};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT: &str = "fse-checkpoint";
pub const CHECKPOINT_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            vocab: model.vocab.clone(),
            tensors: model
                .params
                .tensors()
                .into_iter()
                .map(|(name, t)| Tensor {
                    name,
                    shape: t.shape,
                    data: t.data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut params = ParamSet::new(&self.config, self.vocab.len());
        let expected: Vec<(String, [usize; 2])> = params.tensors().into_iter().map(|(n, t)| (n, t.shape)).collect();
        if expected.len() != self.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (slot, t)) in expected.iter().zip(params.tensors_mut().into_iter().zip(&self.tensors)) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape[0] * shape[1] {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {:?} {:?} does not match expected {name:?} {shape:?}",
                    t.name, t.shape
                )));
            }
            slot.copy_from_slice(&t.data);
        }
        if !params.is_finite() {
            return Err(ModelError::NumericFailure("checkpoint holds non-finite values".into()));
        }
        Ok(Model {
            config: self.config,
            vocab: self.vocab,
            params,
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn checkpoint_json(model: &Model) -> String {
    serde_json::to_string(&Checkpoint::from_model(model)).expect("checkpoint serializes")
}

pub fn model_from_json(src: &str) -> Result<Model, ModelError> {
    let ckpt: Checkpoint = serde_json::from_str(src).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    ckpt.into_model()
}

/// Writes `model.json` into `dir`, creating it if needed.
pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<(), ModelError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(CHECKPOINT_FILE);
    crate::atomic_write(&path, checkpoint_json(model).as_bytes()).map_err(|e| io_err(&path, e))
}

/// Reads a checkpoint from a directory or a file path.
pub fn load_checkpoint(path: &Path) -> Result<Model, ModelError> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    let src = std::fs::read_to_string(&file).map_err(|e| io_err(&file, e))?;
    model_from_json(&src)
}
