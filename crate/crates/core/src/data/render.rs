//! Storm-centred synthetic satellite images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::geo::ImageSpec;

use super::track::Record;

/// Peak-to-peak half width of the additive uniform noise.
pub const NOISE_AMPLITUDE: f32 = 0.02;
/// Log-elongation of the cloud mass per unit of latent structure.
const ELONGATION: f64 = 0.35;

/// Square grayscale image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub side: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            pixels: vec![0.0; side * side],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.side + col]
    }

    /// Flattened patches in row-major patch order.
    pub fn patches(&self, spec: &ImageSpec) -> Result<Vec<Vec<f32>>> {
        spec.validate()?;
        if self.side != spec.image_px || self.pixels.len() != self.side * self.side {
            return Err(PipeError::Shape(format!(
                "image is {}px but the spec expects {}px",
                self.side, spec.image_px
            )));
        }
        let (p, n) = (spec.patch_px, spec.grid_side());
        let mut out = Vec::with_capacity(n * n);
        for pr in 0..n {
            for pc in 0..n {
                let mut patch = Vec::with_capacity(p * p);
                for r in 0..p {
                    let start = (pr * p + r) * self.side + pc * p;
                    patch.extend_from_slice(&self.pixels[start..start + p]);
                }
                out.push(patch);
            }
        }
        Ok(out)
    }
}

fn noise_seed(seed: u64, record: &Record) -> u64 {
    let t = record.datetime.and_utc().timestamp() as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t.rotate_left(17)
}

/// Gaussian cloud mass centred on the storm. Positive structure stretches it
/// east-west, negative structure north-south; zero gives a round cloud. Deeper
/// storms are brighter.
pub fn render_image(record: &Record, hidden_structure: f64, spec: &ImageSpec, seed: u64) -> Image {
    let side = spec.image_px;
    let mid = (side as f64 - 1.0) / 2.0;
    let base_sigma = side as f64 / 6.0;
    let sx = base_sigma * (ELONGATION * hidden_structure).exp();
    let sy = base_sigma * (-ELONGATION * hidden_structure).exp();
    let amplitude = 0.55 + 0.35 * ((1010.0 - record.pressure) / 120.0).clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, record));
    let mut pixels = Vec::with_capacity(side * side);
    for r in 0..side {
        let dy = r as f64 - mid;
        for c in 0..side {
            let dx = c as f64 - mid;
            let cloud = amplitude * (-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy))).exp();
            let noise = rng.gen_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
            pixels.push((cloud as f32 + noise).clamp(0.0, 1.0));
        }
    }
    Image { side, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn record() -> Record {
        Record {
            datetime: NaiveDate::from_ymd_opt(2018, 10, 23)
                .unwrap()
                .and_hms_opt(1, 0, 0)
                .unwrap(),
            lat: 11.65,
            lng: 151.61,
            pressure: 974.2,
        }
    }

    #[test]
    fn zero_structure_is_round() {
        let spec = ImageSpec::with_footprint(32, 16);
        let img = render_image(&record(), 0.0, &spec, 7);
        let n = img.side;
        let mut max_asym = 0.0f32;
        for r in 0..n {
            for c in 0..n {
                // quarter turn maps (r, c) to (c, n - 1 - r)
                max_asym = max_asym.max((img.get(r, c) - img.get(c, n - 1 - r)).abs());
            }
        }
        assert!(max_asym <= 2.0 * NOISE_AMPLITUDE + 1e-6, "{max_asym}");
        let stretched = render_image(&record(), 1.5, &spec, 7);
        let mut asym = 0.0f32;
        for r in 0..n {
            for c in 0..n {
                asym = asym.max((stretched.get(r, c) - stretched.get(c, n - 1 - r)).abs());
            }
        }
        assert!(asym > 4.0 * NOISE_AMPLITUDE);
    }

    #[test]
    fn deterministic_and_bounded() {
        let spec = ImageSpec::with_footprint(32, 16);
        let a = render_image(&record(), 0.7, &spec, 3);
        assert_eq!(a, render_image(&record(), 0.7, &spec, 3));
        assert_ne!(a, render_image(&record(), 0.7, &spec, 4));
        assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn patches_are_row_major() {
        let spec = ImageSpec::with_footprint(4, 2);
        let img = Image {
            side: 4,
            pixels: (0..16).map(|v| v as f32).collect(),
        };
        let p = img.patches(&spec).unwrap();
        assert_eq!(p[0], vec![0.0, 1.0, 4.0, 5.0]);
        assert_eq!(p[1], vec![2.0, 3.0, 6.0, 7.0]);
        assert_eq!(p[3], vec![10.0, 11.0, 14.0, 15.0]);
        assert!(img.patches(&ImageSpec::with_footprint(8, 2)).is_err());
    }
}
