//! Three-axis position ids (temporal, height/latitude, width/longitude) for a
//! mixed text/image token sequence.
//!
//! Three schemes are supported:
//!
//! * `Sequential`: every token gets its sequence index on all axes.
//! * `ThreeD`: text tokens share a running counter; each image block is laid
//!   out on a temporal/row/column grid anchored at the counter.
//! * `Physics`: text tokens keep a running counter while image tokens carry
//!   hour-of-year, shifted latitude and shifted longitude of their patch,
//!   mapped to strictly negative values so they never meet text ids.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::geo::{shift_to_id_ranges, temporal_position, PhysicalContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    Text {
        length: usize,
    },
    Image {
        n_row: usize,
        n_col: usize,
        context: Option<PhysicalContext>,
    },
}

impl Segment {
    pub fn image(context: PhysicalContext) -> Self {
        Segment::Image {
            n_row: context.n_row,
            n_col: context.n_col,
            context: Some(context),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Segment::Text { length } => *length,
            Segment::Image { n_row, n_col, .. } => n_row * n_col,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Text,
    Vision,
}

/// Ordered text segments and image blocks of one input instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenLayout {
    pub segments: Vec<Segment>,
}

impl TokenLayout {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let layout = Self { segments };
        layout.validate()?;
        Ok(layout)
    }

    pub fn text_only(length: usize) -> Self {
        Self {
            segments: vec![Segment::Text { length }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, seg) in self.segments.iter().enumerate() {
            if let Segment::Image {
                n_row,
                n_col,
                context: Some(ctx),
            } = seg
            {
                if ctx.n_row != *n_row
                    || ctx.n_col != *n_col
                    || ctx.patch_centers.len() != n_row * n_col
                {
                    return Err(PipeError::Config(format!(
                        "image block {i} is {n_row}x{n_col} but its context grid is {}x{}",
                        ctx.n_row, ctx.n_col
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn token_kinds(&self) -> Vec<TokenKind> {
        let mut kinds = Vec::with_capacity(self.seq_len());
        for seg in &self.segments {
            let kind = match seg {
                Segment::Text { .. } => TokenKind::Text,
                Segment::Image { .. } => TokenKind::Vision,
            };
            kinds.extend(std::iter::repeat(kind).take(seg.len()));
        }
        kinds
    }

    /// Append text tokens, merging into a trailing text segment.
    pub fn push_text(&mut self, length: usize) {
        if length == 0 {
            return;
        }
        match self.segments.last_mut() {
            Some(Segment::Text { length: l }) => *l += length,
            _ => self.segments.push(Segment::Text { length }),
        }
    }
}

/// Per-token position values on the temporal, height and width axes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PositionGrid {
    pub axes: [Vec<f64>; 3],
}

impl PositionGrid {
    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, token: usize) -> [f64; 3] {
        [
            self.axes[0][token],
            self.axes[1][token],
            self.axes[2][token],
        ]
    }

    fn push(&mut self, t: f64, h: f64, w: f64) {
        self.axes[0].push(t);
        self.axes[1].push(h);
        self.axes[2].push(w);
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            axes: [
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoParams {
    pub tokens_per_second: f64,
    pub temporal_patch_size: u32,
    pub fps: f64,
}

impl Default for VideoParams {
    fn default() -> Self {
        Self {
            tokens_per_second: 1.0,
            temporal_patch_size: 2,
            fps: 2.0,
        }
    }
}

impl VideoParams {
    pub fn validate(&self) -> Result<()> {
        if self.tokens_per_second > 0.0 && self.temporal_patch_size > 0 && self.fps > 0.0 {
            Ok(())
        } else {
            Err(PipeError::Config(format!(
                "video parameters must be strictly positive: {self:?}"
            )))
        }
    }

    /// Temporal id advance between consecutive frames.
    pub fn frame_stride(&self) -> f64 {
        self.tokens_per_second * self.temporal_patch_size as f64 / self.fps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Sequential,
    ThreeD,
    Physics,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Sequential, Scheme::ThreeD, Scheme::Physics];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Sequential => "sequential",
            Scheme::ThreeD => "three_d",
            Scheme::Physics => "physics",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = PipeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Scheme::Sequential),
            "three_d" | "3d" => Ok(Scheme::ThreeD),
            "physics" => Ok(Scheme::Physics),
            other => Err(PipeError::Config(format!(
                "unknown scheme {other:?} (expected sequential, three_d or physics)"
            ))),
        }
    }
}

/// Everything needed to build a grid under any scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexingOptions {
    pub scheme: Scheme,
    /// Map physics ids of vision tokens to negative values.
    pub negate: bool,
    pub video: VideoParams,
}

impl Default for IndexingOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Physics,
            negate: true,
            video: VideoParams::default(),
        }
    }
}

pub fn build_grid(layout: &TokenLayout, opts: &IndexingOptions) -> Result<PositionGrid> {
    match opts.scheme {
        Scheme::Sequential => Ok(sequential_ids(layout.seq_len())),
        Scheme::ThreeD => three_d_ids(layout, &opts.video),
        Scheme::Physics => physics_ids_with(layout, opts.negate),
    }
}

pub fn sequential_ids(seq_len: usize) -> PositionGrid {
    let ids: Vec<f64> = (0..seq_len).map(|i| i as f64).collect();
    PositionGrid {
        axes: [ids.clone(), ids.clone(), ids],
    }
}

pub fn three_d_ids(layout: &TokenLayout, vp: &VideoParams) -> Result<PositionGrid> {
    vp.validate()?;
    let stride = vp.frame_stride();
    let mut grid = PositionGrid::with_capacity(layout.seq_len());
    let mut counter = 0.0_f64;
    let mut block = 0usize;
    for seg in &layout.segments {
        match seg {
            Segment::Text { length } => {
                for _ in 0..*length {
                    grid.push(counter, counter, counter);
                    counter += 1.0;
                }
            }
            Segment::Image { n_row, n_col, .. } => {
                if n_row * n_col == 0 {
                    continue;
                }
                let base = counter;
                let t = base + block as f64 * stride;
                let mut max_id = f64::NEG_INFINITY;
                for r in 0..*n_row {
                    for c in 0..*n_col {
                        let (h, w) = (base + r as f64, base + c as f64);
                        grid.push(t, h, w);
                        max_id = max_id.max(t).max(h).max(w);
                    }
                }
                counter = max_id + 1.0;
                block += 1;
            }
        }
    }
    Ok(grid)
}

/// Map a non-negative id to `-(v + 1)`.
pub fn negate_map(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(-(v + 1.0))
    } else {
        Err(PipeError::Config(format!(
            "negative mapping needs a non-negative id, got {v}"
        )))
    }
}

pub fn physics_ids(layout: &TokenLayout) -> Result<PositionGrid> {
    physics_ids_with(layout, true)
}

/// Physics-informed ids; `negate = false` keeps vision ids in their raw
/// non-negative ranges (the "without negative indexing" ablation).
pub fn physics_ids_with(layout: &TokenLayout, negate: bool) -> Result<PositionGrid> {
    let map = |v: f64| if negate { negate_map(v) } else { Ok(v) };
    let mut grid = PositionGrid::with_capacity(layout.seq_len());
    let mut text_counter = 0.0_f64;
    for (i, seg) in layout.segments.iter().enumerate() {
        match seg {
            Segment::Text { length } => {
                for _ in 0..*length {
                    grid.push(text_counter, text_counter, text_counter);
                    text_counter += 1.0;
                }
            }
            Segment::Image {
                n_row,
                n_col,
                context,
            } => {
                let ctx = context.as_ref().ok_or_else(|| {
                    PipeError::Config(format!(
                        "image block in segment {i} has no physical context"
                    ))
                })?;
                let t = map(temporal_position(&ctx.timestamp))?;
                for r in 0..*n_row {
                    for c in 0..*n_col {
                        let (lat_id, lng_id) = shift_to_id_ranges(ctx.patch(r, c));
                        grid.push(t, map(lat_id)?, map(lng_id)?);
                    }
                }
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisjointReport {
    pub collisions: usize,
    pub ok: bool,
}

/// Count `(axis, value)` pairs used by both a text token and a vision token.
pub fn validate_disjoint(grid: &PositionGrid, layout: &TokenLayout) -> Result<DisjointReport> {
    let kinds = layout.token_kinds();
    if kinds.len() != grid.len() {
        return Err(PipeError::Shape(format!(
            "grid has {} tokens but layout has {}",
            grid.len(),
            kinds.len()
        )));
    }
    let mut collisions = 0;
    for axis in &grid.axes {
        let mut text = HashSet::new();
        let mut vision = HashSet::new();
        for (v, kind) in axis.iter().zip(&kinds) {
            // +0.0 folds -0.0 into 0.0
            let bits = (v + 0.0).to_bits();
            match kind {
                TokenKind::Text => text.insert(bits),
                TokenKind::Vision => vision.insert(bits),
            };
        }
        collisions += text.intersection(&vision).count();
    }
    Ok(DisjointReport {
        collisions,
        ok: collisions == 0,
    })
}
