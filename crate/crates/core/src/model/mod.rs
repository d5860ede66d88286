//! Small decoder-only multimodal forecaster trained from scratch.
//!
//! Text is tokenized per character; every `<image>` tag expands to one token
//! per image patch, embedded by a learned linear projection. Positions enter
//! twice: as an additive sinusoidal embedding scaled by `1 / d_model`, and as
//! multi-axis rotary rotation of queries and keys driven by the position grid
//! of the configured indexing scheme.

pub mod attention;
pub mod checkpoint;
pub mod generate;
pub mod input;
pub mod params;
pub mod train;
pub mod transformer;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::Wavelengths;
use crate::error::{PipeError, Result};
use crate::geo::ImageSpec;
use crate::indexing::{IndexingOptions, Scheme, VideoParams};
use crate::rope::RopeConfig;

pub use generate::{generate, Generation};
pub use input::ModelInput;
pub use params::Params;
pub use train::{train, TrainConfig, TrainReport};
pub use transformer::Forecaster;
pub use vocab::CharVocabulary;

/// Which additive positional embedding is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeMode {
    /// No additive embedding; positions come from rotary attention only.
    None,
    /// Standard sinusoid at the sequence index on every row.
    Standard,
    /// Standard sinusoid on text rows, variant-frequency sinusoid on vision rows.
    Variant,
}

impl PeMode {
    pub const ALL: [PeMode; 3] = [PeMode::None, PeMode::Standard, PeMode::Variant];

    pub fn name(&self) -> &'static str {
        match self {
            PeMode::None => "none",
            PeMode::Standard => "standard",
            PeMode::Variant => "variant",
        }
    }
}

impl fmt::Display for PeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeMode {
    type Err = PipeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PeMode::None),
            "standard" => Ok(PeMode::Standard),
            "variant" => Ok(PeMode::Variant),
            other => Err(PipeError::Config(format!(
                "unknown positional embedding {other:?} (expected none, standard or variant)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    pub vocab_size: usize,
    pub rope: RopeConfig,
    pub scheme: Scheme,
    /// Map physics-scheme vision ids to negative values.
    pub negate_vision_ids: bool,
    pub video: VideoParams,
    pub use_vision: bool,
    pub pe: PeMode,
    pub wavelengths: Wavelengths,
    pub image: ImageSpec,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let (d_model, n_heads) = (128, 4);
        Self {
            d_model,
            n_layers: 2,
            n_heads,
            mlp_ratio: 4,
            vocab_size: CharVocabulary::default().size(),
            rope: RopeConfig::for_head_dim(d_model / n_heads),
            scheme: Scheme::Physics,
            negate_vision_ids: true,
            video: VideoParams::default(),
            use_vision: true,
            pe: PeMode::Variant,
            wavelengths: Wavelengths::default(),
            image: ImageSpec::with_footprint(32, 16),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full method: vision, physics indexing with negative mapping, variant PE.
    pub fn pipe() -> Self {
        Self::default()
    }

    /// Small configuration, handy for tests.
    pub fn tiny(d_model: usize, n_layers: usize, n_heads: usize) -> Self {
        Self {
            d_model,
            n_layers,
            n_heads,
            rope: RopeConfig::for_head_dim(d_model / n_heads),
            image: ImageSpec::with_footprint(8, 4),
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn indexing(&self) -> IndexingOptions {
        IndexingOptions {
            scheme: self.scheme,
            negate: self.negate_vision_ids,
            video: self.video,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 8 != 0 {
            return Err(PipeError::Config(format!(
                "d_model must be a positive multiple of 8, got {}",
                self.d_model
            )));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(PipeError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.mlp_ratio == 0 {
            return Err(PipeError::Config(
                "n_layers and mlp_ratio must be positive".into(),
            ));
        }
        if self.rope.head_dim != self.head_dim() {
            return Err(PipeError::Config(format!(
                "rotary head_dim {} does not match d_model / n_heads = {}",
                self.rope.head_dim,
                self.head_dim()
            )));
        }
        if self.vocab_size < CharVocabulary::default().size() {
            return Err(PipeError::Config(format!(
                "vocab_size {} is smaller than the character vocabulary",
                self.vocab_size
            )));
        }
        self.rope.validate()?;
        self.video.validate()?;
        self.wavelengths.validate()?;
        self.image.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny(16, 1, 2).validate().unwrap();
        let bad = ModelConfig {
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            d_model: 36,
            ..ModelConfig::tiny(36, 1, 1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pe_mode_names() {
        for m in PeMode::ALL {
            assert_eq!(m.name().parse::<PeMode>().unwrap(), m);
        }
    }
}
