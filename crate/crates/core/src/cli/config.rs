use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::track::{DEFAULT_HISTORY, DEFAULT_HORIZON};
use crate::data::SimParams;
use crate::error::{PipeError, Result};
use crate::eval::{Axis, EvalOptions};
use crate::model::{ModelConfig, TrainConfig};
use crate::rope::RopeConfig;

/// Environment variable that overrides the output directory of every
/// subcommand; an explicit `--out` still wins.
pub const OUT_DIR_ENV: &str = "PIPE_OUT_DIR";

/// File name of the resolved configuration written next to outputs.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            forecasts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub tracks: usize,
    pub length: usize,
    /// Seeds the split; the simulator has its own seed in `sim`.
    pub split_seed: u64,
    pub sim: SimParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            tracks: 50,
            length: 48,
            split_seed: 0,
            sim: SimParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub seeds: Vec<u64>,
    /// Cartesian grid over these axes; empty means the published table rows.
    pub axes: Vec<Axis>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            axes: Vec::new(),
        }
    }
}

/// Everything one invocation needs, serializable as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub history: usize,
    pub horizon: usize,
    pub paths: Paths,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            history: DEFAULT_HISTORY,
            horizon: DEFAULT_HORIZON,
            paths: Paths::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PipeError::io(path, e))?;
        toml::from_str(&text).map_err(|e| PipeError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PipeError::Config(format!("cannot serialize configuration: {e}")))
    }

    /// Write the configuration to `dir/config.toml`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_toml()?).map_err(|e| PipeError::io(&path, e))?;
        Ok(path)
    }

    /// Keep the rotary table in step with the head width when `d_model` or
    /// `n_heads` changed without an explicit rotary section split.
    pub fn sync_rope(&mut self) {
        let m = &mut self.model;
        if m.n_heads > 0 && m.rope.head_dim != m.d_model / m.n_heads {
            m.rope = RopeConfig::for_head_dim(m.d_model / m.n_heads);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 {
            return Err(PipeError::Config("history and horizon must be positive".into()));
        }
        self.data.sim.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.test_stride == 0 {
            return Err(PipeError::Config("eval.test_stride must be positive".into()));
        }
        Ok(())
    }
}
