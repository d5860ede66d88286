use serde::{Deserialize, Serialize};

use crate::data::prompt::system_prompt;
use crate::data::{parse_forecast, ForecastInstance, Series};
use crate::error::{PipeError, Result};
use crate::tensor::Matrix;

use super::input::{ModelInput, TokenSlot};
use super::transformer::{Forecaster, KvCache};

/// Enough room for a 12-hour label with three-digit longitudes.
pub const DEFAULT_MAX_NEW: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub tokens: usize,
    /// Whether decoding stopped because the label object was closed.
    pub closed: bool,
}

/// Keys and values of a text prefix shared by many prompts.
#[derive(Debug, Clone)]
pub struct PrefixCache {
    slots: Vec<TokenSlot>,
    positions: Vec<[f64; 3]>,
    pe: Option<Matrix<f64>>,
    cache: KvCache<f32>,
}

impl PrefixCache {
    /// Process the first `len` slots of `input`, which must be text.
    pub fn new(model: &Forecaster, input: &ModelInput, len: usize) -> Result<Self> {
        let slots = input.slots[..len.min(input.len())].to_vec();
        if slots.iter().any(|s| matches!(s, TokenSlot::Vision(_))) {
            return Err(PipeError::Shape("a shared prefix must be text only".into()));
        }
        let mut cache = model.new_cache(slots.len());
        model.extend(input, &slots, &mut cache)?;
        Ok(Self {
            positions: (0..slots.len()).map(|i| input.grid.position(i)).collect(),
            pe: input.pe.as_ref().map(|pe| {
                Matrix::from_vec(slots.len(), pe.cols, pe.data[..slots.len() * pe.cols].to_vec())
            }),
            slots,
            cache,
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// True when `input` starts with this prefix at identical positions.
    pub fn matches(&self, input: &ModelInput) -> bool {
        let n = self.len();
        if input.len() < n || input.slots[..n] != self.slots[..] {
            return false;
        }
        if (0..n).any(|i| input.grid.position(i) != self.positions[i]) {
            return false;
        }
        match (&self.pe, &input.pe) {
            (None, None) => true,
            (Some(a), Some(b)) => b.data[..a.data.len()] == a.data[..],
            _ => false,
        }
    }
}

/// Greedy decoding after the prompt of `input`, stopping once the first
/// opened `{` is closed or `max_new` tokens have been produced.
pub fn generate(
    model: &Forecaster,
    input: &ModelInput,
    max_new: usize,
    prefix: Option<&PrefixCache>,
) -> Result<Generation> {
    let room = input.capacity() - input.len();
    let max_new = max_new.min(room);
    let capacity = input.len() + max_new;
    let mut cache = match prefix {
        Some(p) if p.matches(input) => p.cache.resized(capacity),
        _ => model.new_cache(capacity),
    };
    let start = cache.len;
    let mut logits = model.extend(input, &input.slots[start..], &mut cache)?;
    let image_id = model.vocab.image_id() as usize;
    let mut ids = Vec::new();
    let mut depth = 0i32;
    let mut closed = false;
    while ids.len() < max_new {
        let row = logits.row(logits.rows - 1);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if j != image_id && j < model.vocab.size() && (v > row[best] || best == image_id) {
                best = j;
            }
        }
        let id = best as u32;
        ids.push(id);
        match model.vocab.token_str(id).as_deref() {
            Some("{") => depth += 1,
            Some("}") => {
                depth -= 1;
                if depth <= 0 {
                    closed = true;
                    break;
                }
            }
            _ => {}
        }
        if ids.len() == max_new {
            break;
        }
        logits = model.extend(input, &[TokenSlot::Text(id)], &mut cache)?;
    }
    Ok(Generation {
        text: model.vocab.detokenize(&ids)?,
        tokens: ids.len(),
        closed,
    })
}

/// Generated text and its parse for one window.
#[derive(Debug)]
pub struct Forecast {
    pub generation: Generation,
    pub parsed: Result<Series>,
}

pub fn forecast(
    model: &Forecaster,
    instance: &ForecastInstance,
    max_new: usize,
    prefix: Option<&PrefixCache>,
) -> Result<Forecast> {
    let input = ModelInput::prompt(&model.cfg, &model.vocab, instance, max_new)?;
    let generation = generate(model, &input, max_new, prefix)?;
    let parsed = parse_forecast(&generation.text, instance.horizon());
    Ok(Forecast { generation, parsed })
}

/// Cache of the instruction text that opens every prompt of this horizon.
pub fn system_prefix(model: &Forecaster, instance: &ForecastInstance) -> Result<PrefixCache> {
    let input = ModelInput::prompt(&model.cfg, &model.vocab, instance, 0)?;
    let system = system_prompt(instance.history.len(), instance.horizon());
    PrefixCache::new(model, &input, system.chars().count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_prompt, Dataset, SimParams};
    use crate::model::train::{fit, TrainConfig};
    use crate::model::ModelConfig;

    #[test]
    fn greedy_decoding_is_deterministic_and_bounded() {
        let cfg = ModelConfig::tiny(16, 1, 2);
        let ds = Dataset::synthesize(&SimParams::default(), 1, 24, &cfg.image).unwrap();
        let inst = ds.windows(&ds.sequence_ids(), 12, 12).unwrap().remove(0);
        let model = Forecaster::new(cfg).unwrap();
        let a = forecast(&model, &inst, 30, None).unwrap();
        let b = forecast(&model, &inst, 30, None).unwrap();
        assert_eq!(a.generation, b.generation);
        assert!(a.generation.tokens <= 30);
        assert!(!a.generation.text.contains("<image>"));
        // unparseable output is an error value, not a panic
        if !a.generation.closed {
            assert!(a.parsed.is_err());
        }
        let prefix = system_prefix(&model, &inst).unwrap();
        let c = forecast(&model, &inst, 30, Some(&prefix)).unwrap();
        assert_eq!(a.generation, c.generation);
    }

    #[test]
    fn memorized_label_is_reproduced() {
        let cfg = ModelConfig::tiny(32, 2, 2);
        let ds = Dataset::synthesize(&SimParams::default(), 1, 24, &cfg.image).unwrap();
        let inst = ds.windows(&ds.sequence_ids(), 12, 12).unwrap().remove(0);
        let mut model = Forecaster::new(cfg).unwrap();
        let input = ModelInput::training(&model.cfg, &model.vocab, &inst).unwrap();
        let tc = TrainConfig {
            epochs: 500,
            batch_size: 1,
            lr: 3e-3,
            warmup_steps: 10,
            ..Default::default()
        };
        let report = fit(&mut model, 1, &tc, |_, _| Ok(input.clone())).unwrap();
        let last = *report.loss_trace.last().unwrap();
        assert!(last < 0.05, "final loss {last}");
        let (_, label) = build_prompt(&inst).unwrap();
        let out = forecast(&model, &inst, DEFAULT_MAX_NEW, None).unwrap();
        assert_eq!(out.generation.text, label);
        assert!(out.generation.closed);
        let series = out.parsed.unwrap();
        assert_eq!(series.len(), 12);
        assert_eq!(series.latitude.len(), 12);
        assert_eq!(series.longitude.len(), 12);
        assert_eq!(series.pressure.len(), 12);
    }
}
