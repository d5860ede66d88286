use std::sync::Arc;

use crate::data::{build_prompt, ForecastInstance, Image};
use crate::encoding::{build_pe_matrix, standard_pe_matrix};
use crate::error::{PipeError, Result};
use crate::geo::PhysicalContext;
use crate::indexing::{build_grid, PositionGrid, Segment, TokenLayout};
use crate::rope::RopeTable;
use crate::tensor::Matrix;

use super::vocab::CharVocabulary;
use super::{ModelConfig, PeMode};

/// One sequence position: a character id or a row of the patch matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenSlot {
    Text(u32),
    Vision(usize),
}

/// An image together with where and when it was taken.
#[derive(Debug, Clone)]
pub struct ImageBlock {
    pub image: Arc<Image>,
    pub context: PhysicalContext,
}

/// Everything the network needs for one sequence.
///
/// `layout`, `grid`, `rope` and `pe` may cover more positions than `slots`
/// so that generated tokens have positions to occupy.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub slots: Vec<TokenSlot>,
    /// Flattened patches, one row per vision slot.
    pub patches: Matrix<f32>,
    pub layout: TokenLayout,
    pub grid: PositionGrid,
    pub rope: RopeTable,
    pub pe: Option<Matrix<f64>>,
    /// `targets[i]` is the id expected after position `i`.
    pub targets: Vec<u32>,
    pub loss_mask: Vec<bool>,
    /// Number of slots that belong to the prompt.
    pub prompt_len: usize,
}

impl ModelInput {
    /// Tokenize `prompt + label`, expand every `<image>` into the patch
    /// tokens of the matching block, and leave room for `extra` further text
    /// positions. The loss covers predictions of label tokens only.
    pub fn build(
        cfg: &ModelConfig,
        vocab: &CharVocabulary,
        prompt: &str,
        images: &[ImageBlock],
        label: &str,
        extra: usize,
    ) -> Result<Self> {
        let prompt_ids = vocab.tokenize(prompt)?;
        let label_ids = vocab.tokenize(label)?;
        let image_id = vocab.image_id();
        let tags = prompt_ids.iter().filter(|&&id| id == image_id).count();
        if tags != images.len() {
            return Err(PipeError::Shape(format!(
                "prompt has {tags} image placeholders but {} images were supplied",
                images.len()
            )));
        }
        if label_ids.contains(&image_id) {
            return Err(PipeError::Shape("label contains an image placeholder".into()));
        }

        let spec = &cfg.image;
        let patch_len = spec.patch_len();
        let mut slots = Vec::new();
        let mut patch_data = Vec::with_capacity(images.len() * spec.patch_count() * patch_len);
        let mut layout = TokenLayout::default();
        let mut block = 0;
        for &id in &prompt_ids {
            if id != image_id {
                slots.push(TokenSlot::Text(id));
                layout.push_text(1);
                continue;
            }
            let b = &images[block];
            block += 1;
            let patches = b.image.patches(spec)?;
            if b.context.n_row * b.context.n_col != patches.len() {
                return Err(PipeError::Shape(format!(
                    "image {} has {} patches but its context grid is {}x{}",
                    block - 1,
                    patches.len(),
                    b.context.n_row,
                    b.context.n_col
                )));
            }
            for p in patches {
                slots.push(TokenSlot::Vision(patch_data.len() / patch_len));
                patch_data.extend_from_slice(&p);
            }
            layout.segments.push(Segment::image(b.context.clone()));
        }
        let prompt_len = slots.len();
        slots.extend(label_ids.iter().map(|&id| TokenSlot::Text(id)));
        layout.push_text(label_ids.len() + extra);
        layout.validate()?;

        let n_patches = patch_data.len() / patch_len;
        let grid = build_grid(&layout, &cfg.indexing())?;
        let rope = RopeTable::new(&grid, &cfg.rope)?;
        let pe = match cfg.pe {
            PeMode::None => None,
            PeMode::Standard => Some(standard_pe_matrix(&layout, cfg.d_model)?.values),
            PeMode::Variant => Some(build_pe_matrix(&layout, cfg.d_model, &cfg.wavelengths)?.values),
        };

        let n = slots.len();
        let mut targets = vec![0; n];
        let mut loss_mask = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if let TokenSlot::Text(id) = slots[i + 1] {
                targets[i] = id;
                loss_mask[i] = i + 1 >= prompt_len;
            }
        }

        Ok(Self {
            slots,
            patches: Matrix::from_vec(n_patches, patch_len, patch_data),
            layout,
            grid,
            rope,
            pe,
            targets,
            loss_mask,
            prompt_len,
        })
    }

    /// Training input (prompt plus label) for a forecast window.
    pub fn training(
        cfg: &ModelConfig,
        vocab: &CharVocabulary,
        instance: &ForecastInstance,
    ) -> Result<Self> {
        let (prompt, label) = build_prompt(instance)?;
        Self::build(cfg, vocab, &prompt, &blocks(cfg, instance)?, &label, 0)
    }

    /// Prompt-only input with room for `max_new` generated tokens.
    pub fn prompt(
        cfg: &ModelConfig,
        vocab: &CharVocabulary,
        instance: &ForecastInstance,
        max_new: usize,
    ) -> Result<Self> {
        let (prompt, _) = build_prompt(instance)?;
        Self::build(cfg, vocab, &prompt, &blocks(cfg, instance)?, "", max_new)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Positions available for tokens, generated ones included.
    pub fn capacity(&self) -> usize {
        self.grid.len()
    }

    pub fn masked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

fn blocks(cfg: &ModelConfig, instance: &ForecastInstance) -> Result<Vec<ImageBlock>> {
    let contexts = instance.contexts(&cfg.image)?;
    Ok(instance
        .images
        .iter()
        .zip(contexts)
        .map(|(image, context)| ImageBlock {
            image: image.clone(),
            context,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SimParams};
    use crate::indexing::TokenKind;

    fn instance(cfg: &ModelConfig) -> ForecastInstance {
        let ds = Dataset::synthesize(&SimParams::default(), 1, 24, &cfg.image).unwrap();
        ds.windows(&ds.sequence_ids(), 12, 12).unwrap().remove(0)
    }

    #[test]
    fn placeholders_expand_to_patches() {
        let cfg = ModelConfig::tiny(16, 1, 2);
        let vocab = CharVocabulary::default();
        let inst = instance(&cfg);
        let input = ModelInput::training(&cfg, &vocab, &inst).unwrap();
        let (prompt, label) = build_prompt(&inst).unwrap();
        let n_patch = cfg.image.patch_count();
        assert_eq!(input.prompt_len, prompt.len() - 12 * 7 + 12 * n_patch);
        assert_eq!(input.len(), input.prompt_len + label.len());
        assert_eq!(input.patches.rows, 12 * n_patch);
        assert_eq!(input.capacity(), input.len());
        let kinds = input.layout.token_kinds();
        for (slot, kind) in input.slots.iter().zip(&kinds) {
            assert_eq!(matches!(slot, TokenSlot::Vision(_)), *kind == TokenKind::Vision);
        }
        assert_eq!(input.masked_count(), label.len());
        assert!(input.loss_mask[input.prompt_len - 1]);
        assert!(!input.loss_mask[input.prompt_len - 2]);
    }

    #[test]
    fn placeholder_count_mismatch_is_rejected() {
        let cfg = ModelConfig::tiny(16, 1, 2);
        let vocab = CharVocabulary::default();
        let err = ModelInput::build(&cfg, &vocab, "a <image> b", &[], "x", 0).unwrap_err();
        assert!(matches!(err, PipeError::Shape(_)));
    }

    #[test]
    fn prompt_input_reserves_positions() {
        let cfg = ModelConfig::tiny(16, 1, 2);
        let vocab = CharVocabulary::default();
        let inst = instance(&cfg);
        let input = ModelInput::prompt(&cfg, &vocab, &inst, 50).unwrap();
        assert_eq!(input.capacity(), input.len() + 50);
        assert_eq!(input.pe.as_ref().unwrap().rows, input.capacity());
        assert_eq!(input.masked_count(), 0);
    }
}
