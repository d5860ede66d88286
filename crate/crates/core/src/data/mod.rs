//! Synthetic benchmark, track files, prompts and dataset splits.

pub mod io;
pub mod prompt;
pub mod render;
pub mod split;
pub mod synth;
pub mod track;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{PipeError, Result};
use crate::geo::ImageSpec;

pub use prompt::{build_prompt, parse_forecast, Series, IMAGE_TAG};
pub use render::{render_image, Image};
pub use split::{split_dataset, Split, DEFAULT_RATIOS};
pub use synth::{synth_track, SimParams, SynthTrack};
pub use track::{windows, ForecastInstance, Record, TyphoonTrack};

/// Tracks with one image per record.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: ImageSpec,
    pub tracks: Vec<TyphoonTrack>,
    pub images: Vec<Vec<Arc<Image>>>,
}

impl Dataset {
    /// `n_tracks` synthetic storms; track `i` uses seed `params.seed + i`.
    pub fn synthesize(
        params: &SimParams,
        n_tracks: usize,
        length: usize,
        spec: &ImageSpec,
    ) -> Result<Self> {
        spec.validate()?;
        let mut tracks = Vec::with_capacity(n_tracks);
        let mut images = Vec::with_capacity(n_tracks);
        for i in 0..n_tracks as u64 {
            let p = SimParams {
                seed: params.seed.wrapping_add(i),
                ..*params
            };
            let synth = synth_track(&p, length)?;
            let imgs = synth
                .track
                .records
                .iter()
                .zip(&synth.hidden)
                .map(|(r, &s)| Arc::new(io::quantize(&render_image(r, s, spec, p.seed))))
                .collect();
            tracks.push(synth.track);
            images.push(imgs);
        }
        Ok(Self {
            spec: *spec,
            tracks,
            images,
        })
    }

    pub fn sequence_ids(&self) -> Vec<String> {
        self.tracks.iter().map(|t| t.sequence_id.clone()).collect()
    }

    /// Sliding windows of the named sequences, in the order given.
    pub fn windows(
        &self,
        ids: &[String],
        history: usize,
        horizon: usize,
    ) -> Result<Vec<ForecastInstance>> {
        let mut out = Vec::new();
        for id in ids {
            let i = self
                .tracks
                .iter()
                .position(|t| &t.sequence_id == id)
                .ok_or_else(|| PipeError::Data(format!("unknown sequence {id}")))?;
            out.extend(windows(&self.tracks[i], &self.images[i], history, horizon)?);
        }
        Ok(out)
    }

    /// Writes `tracks.csv`, `images/meta.json` and `images/<id>/<hour>.pgm`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| PipeError::io(&img_dir, e))?;
        io::save_csv(&self.tracks, &dir.join("tracks.csv"))?;
        let meta = serde_json::to_string_pretty(&io::ImageMeta::from(self.spec))?;
        let meta_path = img_dir.join("meta.json");
        fs::write(&meta_path, meta).map_err(|e| PipeError::io(&meta_path, e))?;
        for (track, imgs) in self.tracks.iter().zip(&self.images) {
            let d = img_dir.join(&track.sequence_id);
            fs::create_dir_all(&d).map_err(|e| PipeError::io(&d, e))?;
            for (k, img) in imgs.iter().enumerate() {
                io::write_pgm(img, &d.join(format!("{k:04}.pgm")))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let tracks = io::load_csv(&dir.join("tracks.csv"))?;
        let meta_path = dir.join("images").join("meta.json");
        let meta_text = fs::read_to_string(&meta_path).map_err(|e| PipeError::io(&meta_path, e))?;
        let meta: io::ImageMeta = serde_json::from_str(&meta_text)?;
        let spec = ImageSpec::from(meta);
        spec.validate()?;
        let mut images = Vec::with_capacity(tracks.len());
        for t in &tracks {
            let d = dir.join("images").join(&t.sequence_id);
            let imgs = (0..t.len())
                .map(|k| {
                    let img = io::read_pgm(&d.join(format!("{k:04}.pgm")))?;
                    if img.side != spec.image_px {
                        return Err(PipeError::Data(format!(
                            "{}: image {k} is {}px, meta says {}px",
                            t.sequence_id, img.side, spec.image_px
                        )));
                    }
                    Ok(Arc::new(img))
                })
                .collect::<Result<Vec<_>>>()?;
            images.push(imgs);
        }
        Ok(Self {
            spec,
            tracks,
            images,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_count() {
        let ds = Dataset::synthesize(
            &SimParams::default(),
            3,
            48,
            &ImageSpec::with_footprint(16, 8),
        )
        .unwrap();
        let w = ds.windows(&ds.sequence_ids(), 12, 12).unwrap();
        assert_eq!(w.len(), 3 * (48 - 12 - 12 + 1));
        let first = &w[0];
        assert_eq!(first.history.len(), 12);
        assert_eq!(first.label.len(), 12);
        assert_eq!(first.label[0].datetime - first.history[11].datetime, chrono::Duration::hours(1));
        assert!(ds.windows(&["nope".to_string()], 12, 12).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::synthesize(
            &SimParams::default(),
            2,
            26,
            &ImageSpec::with_footprint(16, 8),
        )
        .unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.spec, ds.spec);
        assert_eq!(back.images, ds.images);
        assert_eq!(back.tracks.len(), 2);
    }
}
