use std::sync::Arc;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::geo::{GeoPoint, ImageSpec, PhysicalContext, Timestamp};

use super::render::Image;

/// Default history and forecast lengths in hours.
pub const DEFAULT_HISTORY: usize = 12;
pub const DEFAULT_HORIZON: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub datetime: NaiveDateTime,
    pub lat: f64,
    pub lng: f64,
    pub pressure: f64,
}

impl Record {
    pub fn timestamp(&self) -> Timestamp {
        Timestamp::from_datetime(&self.datetime)
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint::new(self.lat, self.lng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TyphoonTrack {
    pub sequence_id: String,
    pub records: Vec<Record>,
}

impl TyphoonTrack {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Hourly spacing, plausible pressure and bounded hourly motion.
    pub fn validate(&self) -> Result<()> {
        let id = &self.sequence_id;
        for (i, r) in self.records.iter().enumerate() {
            if !(r.pressure > 850.0 && r.pressure < 1025.0) {
                return Err(PipeError::Data(format!(
                    "{id}: pressure {} at {} outside (850, 1025) hPa",
                    r.pressure, r.datetime
                )));
            }
            if !(-90.0..=90.0).contains(&r.lat) || !r.lng.is_finite() {
                return Err(PipeError::Data(format!(
                    "{id}: invalid position ({}, {}) at {}",
                    r.lat, r.lng, r.datetime
                )));
            }
            if i == 0 {
                continue;
            }
            let prev = &self.records[i - 1];
            if r.datetime - prev.datetime != Duration::hours(1) {
                return Err(PipeError::Data(format!(
                    "{id}: record at {} does not follow {} by exactly one hour",
                    r.datetime, prev.datetime
                )));
            }
            if (r.lat - prev.lat).abs() >= 2.0 || (r.lng - prev.lng).abs() >= 2.0 {
                return Err(PipeError::Data(format!(
                    "{id}: hourly displacement at {} is 2 degrees or more",
                    r.datetime
                )));
            }
        }
        Ok(())
    }
}

/// One sliding window: `H` observed hours (with images) and `F` target hours.
#[derive(Debug, Clone)]
pub struct ForecastInstance {
    pub sequence_id: String,
    /// Index of the first history record in the source track.
    pub start: usize,
    pub history: Vec<Record>,
    pub images: Vec<Arc<Image>>,
    pub label: Vec<Record>,
}

impl ForecastInstance {
    pub fn horizon(&self) -> usize {
        self.label.len()
    }

    /// Physical metadata for every history image.
    pub fn contexts(&self, spec: &ImageSpec) -> Result<Vec<PhysicalContext>> {
        self.history
            .iter()
            .map(|r| PhysicalContext::extract(r.timestamp(), r.point(), spec))
            .collect()
    }
}

/// Stride-1 windows over a track; yields `len - H - F + 1` instances.
pub fn windows(
    track: &TyphoonTrack,
    images: &[Arc<Image>],
    history: usize,
    horizon: usize,
) -> Result<Vec<ForecastInstance>> {
    if images.len() != track.len() {
        return Err(PipeError::Data(format!(
            "{}: {} images for {} records",
            track.sequence_id,
            images.len(),
            track.len()
        )));
    }
    let span = history + horizon;
    if history == 0 || horizon == 0 || track.len() < span {
        return Ok(Vec::new());
    }
    Ok((0..=track.len() - span)
        .map(|start| ForecastInstance {
            sequence_id: track.sequence_id.clone(),
            start,
            history: track.records[start..start + history].to_vec(),
            images: images[start..start + history].to_vec(),
            label: track.records[start + history..start + span].to_vec(),
        })
        .collect())
}
