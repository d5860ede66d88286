//! JSON checkpoint: a header with the model configuration followed by every
//! weight tensor as a named row-major array. See `docs/checkpoint.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};

use super::params::Params;
use super::transformer::Forecaster;
use super::vocab::CharVocabulary;
use super::ModelConfig;

pub const FORMAT: &str = "pipe-forecaster";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub param_count: usize,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &Forecaster) -> Self {
        let p = &model.params;
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: model.cfg.clone(),
            param_count: p.count(),
            tensors: p
                .layout
                .named
                .iter()
                .map(|(name, slot)| TensorRecord {
                    name: name.clone(),
                    rows: slot.rows,
                    cols: slot.cols,
                    values: p.get(*slot).to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Forecaster> {
        let bad = |m: String| PipeError::Data(format!("checkpoint: {m}"));
        if self.format != FORMAT {
            return Err(bad(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(bad(format!("unsupported version {}", self.version)));
        }
        self.config.validate()?;
        let mut params = Params::<f32>::init(&self.config);
        if self.tensors.len() != params.layout.named.len() {
            return Err(bad(format!(
                "{} tensors, the configuration needs {}",
                self.tensors.len(),
                params.layout.named.len()
            )));
        }
        let named = params.layout.named.clone();
        for (t, (name, slot)) in self.tensors.iter().zip(&named) {
            if &t.name != name || t.rows != slot.rows || t.cols != slot.cols || t.values.len() != slot.len() {
                return Err(bad(format!(
                    "tensor {} ({}x{}) does not match expected {name} ({}x{})",
                    t.name, t.rows, t.cols, slot.rows, slot.cols
                )));
            }
            params.values[slot.range()].copy_from_slice(&t.values);
        }
        if params.count() != self.param_count {
            return Err(bad("parameter count mismatch".into()));
        }
        Ok(Forecaster {
            cfg: self.config,
            params,
            vocab: CharVocabulary::default(),
        })
    }
}

pub fn save(model: &Forecaster, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_model(model))?;
    fs::write(path, text).map_err(|e| PipeError::io(path, e))
}

pub fn load(path: &Path) -> Result<Forecaster> {
    let text = fs::read_to_string(path).map_err(|e| PipeError::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = Forecaster::new(ModelConfig::tiny(16, 2, 2)).unwrap();
        save(&model, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_mismatched_tensors() {
        let model = Forecaster::new(ModelConfig::tiny(16, 1, 2)).unwrap();
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.tensors[3].values.pop();
        assert!(ckpt.into_model().is_err());
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.version = 99;
        assert!(ckpt.into_model().is_err());
    }
}
