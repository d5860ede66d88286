//! Additive sinusoidal positional embeddings.
//!
//! Text rows use the classic transformer encoding. Vision rows use a
//! variant-frequency encoding whose base wavelength is the physical period of
//! each variable: the first half of the model dimensions interleaves
//! day-of-year and hour-of-day groups, the second half interleaves latitude
//! and longitude groups. Within a variable the wavelengths grow geometrically
//! by `10000^(4 / d_model)` per group of four dimensions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::geo::shift_to_id_ranges;
use crate::indexing::{Segment, TokenKind, TokenLayout};
use crate::tensor::Matrix;

const BASE: f64 = 10000.0;

/// Physical periods used as base wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavelengths {
    pub p_day: f64,
    pub p_hour: f64,
    pub p_lat: f64,
    pub p_lng: f64,
}

impl Default for Wavelengths {
    fn default() -> Self {
        Self {
            p_day: 366.0,
            p_hour: 24.0,
            p_lat: 180.0,
            p_lng: 360.0,
        }
    }
}

impl Wavelengths {
    pub fn validate(&self) -> Result<()> {
        if [self.p_day, self.p_hour, self.p_lat, self.p_lng]
            .iter()
            .all(|&p| p > 0.0)
        {
            Ok(())
        } else {
            Err(PipeError::Config(format!(
                "wavelengths must be strictly positive: {self:?}"
            )))
        }
    }
}

/// Physical coordinates of one vision token.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VisionCoords {
    pub t_day: f64,
    pub t_hour: f64,
    /// Latitude shifted into `[0, 180]`.
    pub lat_id: f64,
    /// Longitude shifted into `[0, 360)`.
    pub lng_id: f64,
}

pub fn standard_pe(pos: f64, d_model: usize) -> Result<Vec<f64>> {
    if d_model % 2 != 0 {
        return Err(PipeError::Config(format!(
            "standard positional encoding needs an even d_model, got {d_model}"
        )));
    }
    let mut out = vec![0.0; d_model];
    for i in 0..d_model / 2 {
        let angle = pos / BASE.powf((2 * i) as f64 / d_model as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

fn check_d_model(d_model: usize) -> Result<()> {
    if d_model == 0 || d_model % 8 != 0 {
        return Err(PipeError::Config(format!(
            "variant-frequency encoding needs d_model divisible by 8, got {d_model}"
        )));
    }
    Ok(())
}

/// Wavelength of group `group_index` (counted within its half) for a
/// variable with base period `p`.
pub fn wavelength(group_index: usize, d_model: usize, p: f64) -> Result<f64> {
    check_d_model(d_model)?;
    let groups = d_model / 8;
    if group_index >= groups {
        return Err(PipeError::Config(format!(
            "group {group_index} out of range; d_model {d_model} has {groups} groups per half"
        )));
    }
    Ok(p * BASE.powf((4 * group_index) as f64 / d_model as f64))
}

pub fn variant_frequency_pe(
    coords: &VisionCoords,
    d_model: usize,
    w: &Wavelengths,
) -> Result<Vec<f64>> {
    check_d_model(d_model)?;
    w.validate()?;
    let groups = d_model / 8;
    let half = d_model / 2;
    let mut out = vec![0.0; d_model];
    for g in 0..groups {
        let scale = BASE.powf((4 * g) as f64 / d_model as f64);
        let day = coords.t_day / scale * (2.0 * PI / w.p_day);
        let hour = coords.t_hour / scale * (2.0 * PI / w.p_hour);
        let lat = coords.lat_id / scale * (2.0 * PI / w.p_lat);
        let lng = coords.lng_id / scale * (2.0 * PI / w.p_lng);
        let t = 4 * g;
        out[t] = day.sin();
        out[t + 1] = day.cos();
        out[t + 2] = hour.sin();
        out[t + 3] = hour.cos();
        let s = half + 4 * g;
        out[s] = lat.sin();
        out[s + 1] = lat.cos();
        out[s + 2] = lng.sin();
        out[s + 3] = lng.cos();
    }
    Ok(out)
}

/// Positional-embedding matrix with the kind of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct PeMatrix {
    pub values: Matrix<f64>,
    pub kinds: Vec<TokenKind>,
}

impl PeMatrix {
    pub fn d_model(&self) -> usize {
        self.values.cols
    }

    pub fn zeros(seq_len: usize, d_model: usize) -> Self {
        Self {
            values: Matrix::zeros(seq_len, d_model),
            kinds: vec![TokenKind::Text; seq_len],
        }
    }
}

/// Standard encoding on every row, vision rows included, keyed by sequence index.
pub fn standard_pe_matrix(layout: &TokenLayout, d_model: usize) -> Result<PeMatrix> {
    let n = layout.seq_len();
    let mut values = Matrix::zeros(n, d_model);
    for i in 0..n {
        values.row_mut(i).copy_from_slice(&standard_pe(i as f64, d_model)?);
    }
    Ok(PeMatrix {
        values,
        kinds: layout.token_kinds(),
    })
}

/// Text rows take the standard encoding at their sequence index; vision rows
/// take the variant-frequency encoding of their physical context.
pub fn build_pe_matrix(layout: &TokenLayout, d_model: usize, w: &Wavelengths) -> Result<PeMatrix> {
    check_d_model(d_model)?;
    let n = layout.seq_len();
    let mut values = Matrix::zeros(n, d_model);
    let mut row = 0;
    for (i, seg) in layout.segments.iter().enumerate() {
        match seg {
            Segment::Text { length } => {
                for _ in 0..*length {
                    values
                        .row_mut(row)
                        .copy_from_slice(&standard_pe(row as f64, d_model)?);
                    row += 1;
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
                let (t_day, t_hour) = ctx.day_hour();
                for r in 0..*n_row {
                    for c in 0..*n_col {
                        let (lat_id, lng_id) = shift_to_id_ranges(ctx.patch(r, c));
                        let coords = VisionCoords {
                            t_day,
                            t_hour,
                            lat_id,
                            lng_id,
                        };
                        values
                            .row_mut(row)
                            .copy_from_slice(&variant_frequency_pe(&coords, d_model, w)?);
                        row += 1;
                    }
                }
            }
        }
    }
    Ok(PeMatrix {
        values,
        kinds: layout.token_kinds(),
    })
}

/// `embeddings + pe / d_model`, elementwise.
pub fn add_to_embeddings(embeddings: &Matrix<f64>, pe: &PeMatrix) -> Result<Matrix<f64>> {
    let v = &pe.values;
    if (embeddings.rows, embeddings.cols) != (v.rows, v.cols) {
        return Err(PipeError::Shape(format!(
            "embeddings are {}x{} but the encoding is {}x{}",
            embeddings.rows, embeddings.cols, v.rows, v.cols
        )));
    }
    let d = v.cols as f64;
    let data = embeddings
        .data
        .iter()
        .zip(&v.data)
        .map(|(e, p)| e + p / d)
        .collect();
    Ok(Matrix::from_vec(v.rows, v.cols, data))
}
