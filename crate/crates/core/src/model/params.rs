use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::{Real, View};

use super::ModelConfig;

const INIT_STD: f64 = 0.02;

/// Location of one weight tensor inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlots {
    pub ln1_g: ParamSlot,
    pub ln1_b: ParamSlot,
    pub wq: ParamSlot,
    pub wk: ParamSlot,
    pub wv: ParamSlot,
    pub wo: ParamSlot,
    pub ln2_g: ParamSlot,
    pub ln2_b: ParamSlot,
    pub w1: ParamSlot,
    pub b1: ParamSlot,
    pub w2: ParamSlot,
    pub b2: ParamSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tok_emb: ParamSlot,
    pub null_emb: ParamSlot,
    pub patch_w: ParamSlot,
    pub patch_b: ParamSlot,
    pub layers: Vec<LayerSlots>,
    pub lnf_g: ParamSlot,
    pub lnf_b: ParamSlot,
    pub head_w: ParamSlot,
    pub head_b: ParamSlot,
    /// `(name, slot)` for every tensor, in buffer order.
    pub named: Vec<(String, ParamSlot)>,
    pub total: usize,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

struct Builder {
    offset: usize,
    named: Vec<(String, ParamSlot)>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> ParamSlot {
        let slot = ParamSlot {
            offset: self.offset,
            rows,
            cols,
        };
        self.offset += rows * cols;
        self.named.push((name, slot));
        self.inits.push(init);
        slot
    }
}

impl ParamLayout {
    fn build(cfg: &ModelConfig) -> (Self, Vec<Init>) {
        let d = cfg.d_model;
        let hidden = d * cfg.mlp_ratio;
        let mut b = Builder {
            offset: 0,
            named: Vec::new(),
            inits: Vec::new(),
        };
        let tok_emb = b.add("tok_emb".into(), cfg.vocab_size, d, Init::Normal);
        let null_emb = b.add("null_emb".into(), 1, d, Init::Normal);
        let patch_w = b.add("patch_w".into(), cfg.image.patch_len(), d, Init::Normal);
        let patch_b = b.add("patch_b".into(), 1, d, Init::Zeros);
        let layers = (0..cfg.n_layers)
            .map(|l| LayerSlots {
                ln1_g: b.add(format!("layer{l}.ln1_g"), 1, d, Init::Ones),
                ln1_b: b.add(format!("layer{l}.ln1_b"), 1, d, Init::Zeros),
                wq: b.add(format!("layer{l}.wq"), d, d, Init::Normal),
                wk: b.add(format!("layer{l}.wk"), d, d, Init::Normal),
                wv: b.add(format!("layer{l}.wv"), d, d, Init::Normal),
                wo: b.add(format!("layer{l}.wo"), d, d, Init::Normal),
                ln2_g: b.add(format!("layer{l}.ln2_g"), 1, d, Init::Ones),
                ln2_b: b.add(format!("layer{l}.ln2_b"), 1, d, Init::Zeros),
                w1: b.add(format!("layer{l}.w1"), d, hidden, Init::Normal),
                b1: b.add(format!("layer{l}.b1"), 1, hidden, Init::Zeros),
                w2: b.add(format!("layer{l}.w2"), hidden, d, Init::Normal),
                b2: b.add(format!("layer{l}.b2"), 1, d, Init::Zeros),
            })
            .collect();
        let lnf_g = b.add("lnf_g".into(), 1, d, Init::Ones);
        let lnf_b = b.add("lnf_b".into(), 1, d, Init::Zeros);
        let head_w = b.add("head_w".into(), d, cfg.vocab_size, Init::Normal);
        let head_b = b.add("head_b".into(), 1, cfg.vocab_size, Init::Zeros);
        let layout = Self {
            tok_emb,
            null_emb,
            patch_w,
            patch_b,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            named: b.named,
            total: b.offset,
        };
        (layout, b.inits)
    }

    pub fn new(cfg: &ModelConfig) -> Self {
        Self::build(cfg).0
    }

    /// Per-element weight-decay mask: matrices decay, gains, biases and
    /// embeddings do not.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for l in &self.layers {
            for s in [l.wq, l.wk, l.wv, l.wo, l.w1, l.w2] {
                mask[s.range()].fill(true);
            }
        }
        mask[self.patch_w.range()].fill(true);
        mask[self.head_w.range()].fill(true);
        mask
    }
}

/// Flat parameter buffer plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub layout: ParamLayout,
    pub values: Vec<T>,
}

impl<T: Real> Params<T> {
    /// Weights ~ N(0, 0.02²), layer-norm gains 1, biases 0.
    pub fn init(cfg: &ModelConfig) -> Self {
        let (layout, inits) = ParamLayout::build(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut values = vec![T::zero(); layout.total];
        for ((_, slot), init) in layout.named.iter().zip(&inits) {
            let dst = &mut values[slot.range()];
            match init {
                Init::Normal => dst.iter_mut().for_each(|v| *v = T::of(normal.sample(&mut rng))),
                Init::Zeros => {}
                Init::Ones => dst.fill(T::one()),
            }
        }
        Self { layout, values }
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, slot: ParamSlot) -> &[T] {
        &self.values[slot.range()]
    }

    pub fn view(&self, slot: ParamSlot) -> View<'_, T> {
        View::from_slice(self.get(slot), slot.rows, slot.cols)
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous_and_counted() {
        let cfg = ModelConfig::tiny(16, 2, 2);
        let p = Params::<f32>::init(&cfg);
        let mut expect = 0;
        for (_, s) in &p.layout.named {
            assert_eq!(s.offset, expect);
            expect += s.len();
        }
        assert_eq!(expect, p.count());
        let d = 16;
        let v = cfg.vocab_size;
        let per_layer = 4 * d + 4 * d * d + 2 * 4 * d * d + 4 * d + d;
        let manual = v * d + d + cfg.image.patch_len() * d + d + 2 * per_layer + 2 * d + d * v + v;
        assert_eq!(p.count(), manual);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::tiny(16, 1, 2);
        assert_eq!(Params::<f32>::init(&cfg), Params::<f32>::init(&cfg));
        let other = ModelConfig { seed: 9, ..cfg };
        assert_ne!(Params::<f32>::init(&other).values, Params::<f32>::init(&ModelConfig::tiny(16, 1, 2)).values);
    }
}
