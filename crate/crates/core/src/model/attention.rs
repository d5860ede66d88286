use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::tensor::{matmul, Matrix};

use super::input::ModelInput;
use super::transformer::Forecaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    LastLayer,
    Rollout,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::LastLayer => "last_layer",
            AttentionMode::Rollout => "rollout",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = PipeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last_layer" => Ok(AttentionMode::LastLayer),
            "rollout" => Ok(AttentionMode::Rollout),
            other => Err(PipeError::Config(format!(
                "unknown attention mode {other:?} (expected last_layer or rollout)"
            ))),
        }
    }
}

/// Attention rollout: product of `0.5 (A + I)` over layers, each
/// row-normalized, first layer applied first.
pub fn rollout(layers: &[Matrix<f64>]) -> Matrix<f64> {
    let n = layers.first().map_or(0, |a| a.rows);
    let mut acc = Matrix::<f64>::identity(n);
    for a in layers {
        let mut aug = a.clone();
        for i in 0..n {
            let row = aug.row_mut(i);
            row[i] += 1.0;
            row.iter_mut().for_each(|v| *v *= 0.5);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        acc = matmul(aug.view(), acc.view());
    }
    acc
}

/// Min-max normalize every row (one decoding step) over the keys it can
/// see, `0..=i`. A constant row becomes all ones over its visible keys.
pub fn normalize_steps(m: &Matrix<f64>) -> Matrix<f64> {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        let visible = (i + 1).min(m.cols);
        let row = &m.row(i)[..visible];
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out.row_mut(i)[..visible];
        if hi - lo > 0.0 {
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - lo) / (hi - lo);
            }
        } else {
            dst.fill(1.0);
        }
    }
    out
}

/// Head-averaged attention of the last layer, or its rollout through all
/// layers, normalized per step.
pub fn export_attention(
    model: &Forecaster,
    input: &ModelInput,
    mode: AttentionMode,
) -> Result<Matrix<f64>> {
    let maps = model.trace(input)?.attention_maps();
    let raw = match mode {
        AttentionMode::LastLayer => maps.last().cloned().expect("at least one layer"),
        AttentionMode::Rollout => rollout(&maps),
    };
    Ok(normalize_steps(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::input::ImageBlock;
    use crate::model::ModelConfig;
    use crate::data::{Dataset, SimParams};

    #[test]
    fn identity_layers_roll_out_to_identity() {
        let id = Matrix::<f64>::identity(5);
        let r = rollout(&[id.clone(), id.clone(), id.clone()]);
        assert!(r.max_abs_diff(&id) < 1e-15);
        assert_eq!(normalize_steps(&r), id);
    }

    #[test]
    fn exported_maps_are_normalized() {
        let cfg = ModelConfig::tiny(16, 2, 2);
        let ds = Dataset::synthesize(&SimParams::default(), 1, 4, &cfg.image).unwrap();
        let t = &ds.tracks[0];
        let blocks: Vec<ImageBlock> = (0..2)
            .map(|k| ImageBlock {
                image: ds.images[0][k].clone(),
                context: crate::geo::PhysicalContext::extract(
                    t.records[k].timestamp(),
                    t.records[k].point(),
                    &cfg.image,
                )
                .unwrap(),
            })
            .collect();
        let model = crate::model::Forecaster::new(cfg.clone()).unwrap();
        let input =
            ModelInput::build(&cfg, &model.vocab, "past <image><image> then", &blocks, "{1}", 0).unwrap();
        let raw = model.trace(&input).unwrap().attention_maps();
        for layer in &raw {
            for i in 0..layer.rows {
                let s: f64 = layer.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
        for mode in [AttentionMode::LastLayer, AttentionMode::Rollout] {
            let m = export_attention(&model, &input, mode).unwrap();
            assert_eq!((m.rows, m.cols), (input.len(), input.len()));
            let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
            for i in 1..m.rows {
                let row = &m.row(i)[..=i];
                assert!(row.contains(&0.0) && row.contains(&1.0), "step {i}");
            }
        }
        assert_eq!("rollout".parse::<AttentionMode>().unwrap(), AttentionMode::Rollout);
        assert!("mean".parse::<AttentionMode>().is_err());
    }
}
