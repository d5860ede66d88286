//! Rotary position embeddings over three position axes.
//!
//! Rotary pairs are adjacent dimensions `(2j, 2j + 1)`. The pairs of a head are
//! split into three consecutive sections driven by the temporal, height and
//! width position values respectively.

use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::indexing::PositionGrid;
use crate::tensor::{Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub base: f64,
    /// Rotary-pair counts for the temporal, height and width axes.
    pub sections: [usize; 3],
    /// Restart the frequency schedule at the start of every section instead
    /// of continuing the global pair index.
    #[serde(default)]
    pub per_section_freq_restart: bool,
}

impl RopeConfig {
    /// Temporal axis gets the widest share; height and width get `head_dim / 8` pairs each.
    pub fn for_head_dim(head_dim: usize) -> Self {
        let spatial = head_dim / 8;
        Self {
            head_dim,
            base: 10000.0,
            sections: [head_dim / 2 - 2 * spatial, spatial, spatial],
            per_section_freq_restart: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || self.head_dim % 2 != 0 {
            return Err(PipeError::Config(format!(
                "rotary head_dim must be even and positive, got {}",
                self.head_dim
            )));
        }
        let total: usize = self.sections.iter().sum();
        if total != self.head_dim / 2 {
            return Err(PipeError::Config(format!(
                "rotary sections {:?} sum to {total}, expected head_dim/2 = {}",
                self.sections,
                self.head_dim / 2
            )));
        }
        if !(self.base > 0.0) {
            return Err(PipeError::Config(format!(
                "rotary base must be positive, got {}",
                self.base
            )));
        }
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.head_dim / 2
    }

    /// Axis and angular frequency of every rotary pair.
    pub fn schedule(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.pairs());
        let mut j = 0;
        for (axis, &count) in self.sections.iter().enumerate() {
            for local in 0..count {
                let freq = if self.per_section_freq_restart {
                    self.base.powf(-(local as f64) / count as f64)
                } else {
                    self.base.powf(-2.0 * j as f64 / self.head_dim as f64)
                };
                out.push((axis, freq));
                j += 1;
            }
        }
        out
    }
}

fn rotate_pairs(v: &mut [f64], angles: impl Iterator<Item = f64>) {
    for (pair, angle) in v.chunks_exact_mut(2).zip(angles) {
        let (s, c) = angle.sin_cos();
        let (x, y) = (pair[0], pair[1]);
        pair[0] = x * c - y * s;
        pair[1] = x * s + y * c;
    }
}

/// Rotate pair `j` of `v` by `pos * base^(-2j / head_dim)`.
pub fn rope_rotate_1d(v: &[f64], pos: f64, base: f64) -> Result<Vec<f64>> {
    if v.len() % 2 != 0 {
        return Err(PipeError::Config(format!(
            "rotary vectors need an even length, got {}",
            v.len()
        )));
    }
    let d = v.len() as f64;
    let mut out = v.to_vec();
    rotate_pairs(
        &mut out,
        (0..v.len() / 2).map(|j| pos * base.powf(-2.0 * j as f64 / d)),
    );
    Ok(out)
}

pub fn mrope_rotate(v: &[f64], pos3: [f64; 3], cfg: &RopeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if v.len() != cfg.head_dim {
        return Err(PipeError::Shape(format!(
            "vector has {} dims, rotary head_dim is {}",
            v.len(),
            cfg.head_dim
        )));
    }
    let mut out = v.to_vec();
    rotate_pairs(
        &mut out,
        cfg.schedule()
            .into_iter()
            .map(|(axis, freq)| pos3[axis] * freq),
    );
    Ok(out)
}

/// Precomputed `(cos, sin)` for every token and rotary pair.
#[derive(Debug, Clone)]
pub struct RopeTable {
    pub pairs: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(grid: &PositionGrid, cfg: &RopeConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = cfg.schedule();
        let pairs = schedule.len();
        let n = grid.len();
        let mut cos = Vec::with_capacity(n * pairs);
        let mut sin = Vec::with_capacity(n * pairs);
        for t in 0..n {
            let pos = grid.position(t);
            for &(axis, freq) in &schedule {
                let (s, c) = (pos[axis] * freq).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self { pairs, cos, sin })
    }

    pub fn len(&self) -> usize {
        self.cos.len() / self.pairs.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.cos.is_empty()
    }

    /// Rotate every head of row `row` of `m` (row index into the table is
    /// `token`). `inverse` applies the transpose rotation, which is also the
    /// backward pass of the forward rotation.
    pub fn rotate_row<T: Real>(&self, row: &mut [T], token: usize, inverse: bool) {
        let head_dim = self.pairs * 2;
        let cos = &self.cos[token * self.pairs..(token + 1) * self.pairs];
        let sin = &self.sin[token * self.pairs..(token + 1) * self.pairs];
        for head in row.chunks_exact_mut(head_dim) {
            for (j, pair) in head.chunks_exact_mut(2).enumerate() {
                let c = T::of(cos[j]);
                let s = if inverse { -T::of(sin[j]) } else { T::of(sin[j]) };
                let (x, y) = (pair[0], pair[1]);
                pair[0] = x * c - y * s;
                pair[1] = x * s + y * c;
            }
        }
    }

    /// Rotate all rows of an `L x (n_heads * head_dim)` matrix whose row `i`
    /// belongs to token `offset + i`.
    pub fn rotate<T: Real>(&self, m: &mut Matrix<T>, offset: usize, inverse: bool) {
        for i in 0..m.rows {
            self.rotate_row(m.row_mut(i), offset + i, inverse);
        }
    }
}
