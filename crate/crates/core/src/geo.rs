//! Physical metadata for image tokens: time of year and patch-center
//! geocoordinates.
//!
//! Patch centers use a local equirectangular projection around the storm
//! center (111.195 km per degree, longitude scaled by `cos(lat)`), which is
//! accurate to well under one percent across a 1250 km window at tropical
//! latitudes.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};

/// Kilometres per degree of arc on the mean-radius sphere.
pub const KM_PER_DEG: f64 = 111.195;

/// Hours in a leap year; the temporal position range is `[0, HOURS_PER_YEAR)`.
pub const HOURS_PER_YEAR: u32 = 8784;

const MAX_PROJECTION_LAT: f64 = 89.0;

/// Zero-based ordinal day of a Gregorian date.
pub fn day_of_year(year: i32, month: u32, day: u32) -> Result<u32> {
    if !(1..=12).contains(&month) {
        return Err(PipeError::InvalidDate {
            field: "month",
            value: month as i64,
        });
    }
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or(PipeError::InvalidDate {
        field: "day",
        value: day as i64,
    })?;
    Ok(date.ordinal0())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub year: i32,
    pub day_of_year: u32,
    pub hour_of_day: u32,
}

impl Timestamp {
    pub fn new(year: i32, day_of_year: u32, hour_of_day: u32) -> Result<Self> {
        let days = if NaiveDate::from_yo_opt(year, 366).is_some() {
            366
        } else {
            365
        };
        if day_of_year >= days {
            return Err(PipeError::InvalidDate {
                field: "day_of_year",
                value: day_of_year as i64,
            });
        }
        if hour_of_day > 23 {
            return Err(PipeError::InvalidDate {
                field: "hour_of_day",
                value: hour_of_day as i64,
            });
        }
        Ok(Self {
            year,
            day_of_year,
            hour_of_day,
        })
    }

    pub fn from_datetime(dt: &NaiveDateTime) -> Self {
        Self {
            year: dt.year(),
            day_of_year: dt.ordinal0(),
            hour_of_day: dt.hour(),
        }
    }

    /// Hour of the year, `day_of_year * 24 + hour_of_day`.
    pub fn temporal_position(&self) -> f64 {
        temporal_position(self)
    }
}

/// Hour-of-year position of a timestamp, in `[0, 8783]`.
pub fn temporal_position(ts: &Timestamp) -> f64 {
    (ts.day_of_year * 24 + ts.hour_of_day) as f64
}

/// Latitude/longitude in degrees. Latitude is clamped to `[-90, 90]` and
/// longitude wrapped into `[-180, 180)` on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lng_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lng_deg: f64) -> Self {
        Self {
            lat_deg: lat_deg.clamp(-90.0, 90.0),
            lng_deg: normalize_lng(lng_deg),
        }
    }

    /// Inverse of [`shift_to_id_ranges`].
    pub fn from_id_ranges(lat_id: f64, lng_id: f64) -> Self {
        Self::new(lat_id - 90.0, lng_id)
    }
}

fn normalize_lng(lng: f64) -> f64 {
    let wrapped = (lng + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Shift a point into non-negative id ranges: latitude to `[0, 180]`,
/// longitude to `[0, 360)`.
pub fn shift_to_id_ranges(p: &GeoPoint) -> (f64, f64) {
    let lng_id = p.lng_deg.rem_euclid(360.0);
    let lng_id = if lng_id >= 360.0 { 0.0 } else { lng_id };
    (p.lat_deg + 90.0, lng_id)
}

/// Square image geometry after resizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub image_px: usize,
    pub patch_px: usize,
    pub km_per_px: f64,
}

impl Default for ImageSpec {
    /// 512 px at 5 km covering 2500 km, resized to 224 px, cut into 28 px patches.
    fn default() -> Self {
        Self {
            image_px: 224,
            patch_px: 28,
            km_per_px: 2.0 * 1250.0 / 224.0,
        }
    }
}

impl ImageSpec {
    /// Spec covering the same 2500 km footprint at a different resolution.
    pub fn with_footprint(image_px: usize, patch_px: usize) -> Self {
        Self {
            image_px,
            patch_px,
            km_per_px: 2.0 * 1250.0 / image_px as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_px == 0 || self.image_px == 0 || self.image_px % self.patch_px != 0 {
            return Err(PipeError::Config(format!(
                "image_px {} must be a positive multiple of patch_px {}",
                self.image_px, self.patch_px
            )));
        }
        if !(self.km_per_px > 0.0) {
            return Err(PipeError::Config(format!(
                "km_per_px must be positive, got {}",
                self.km_per_px
            )));
        }
        Ok(())
    }

    /// Patches per side (`N_row == N_col`).
    pub fn grid_side(&self) -> usize {
        self.image_px / self.patch_px
    }

    pub fn patch_count(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn patch_len(&self) -> usize {
        self.patch_px * self.patch_px
    }
}

/// Geographic centers of every patch, row-major, row 0 at the north edge.
pub fn patch_centers(center: &GeoPoint, spec: &ImageSpec) -> Result<Vec<GeoPoint>> {
    spec.validate()?;
    if center.lat_deg.abs() >= MAX_PROJECTION_LAT {
        return Err(PipeError::Projection(format!(
            "center latitude {} is too close to the pole",
            center.lat_deg
        )));
    }
    let side = spec.grid_side();
    let mid = (side as f64 - 1.0) / 2.0;
    let step_km = spec.patch_px as f64 * spec.km_per_px;
    let km_per_deg_lng = KM_PER_DEG * center.lat_deg.to_radians().cos();

    let mut out = Vec::with_capacity(side * side);
    for r in 0..side {
        let north = (mid - r as f64) * step_km;
        for c in 0..side {
            let east = (c as f64 - mid) * step_km;
            out.push(GeoPoint::new(
                center.lat_deg + north / KM_PER_DEG,
                center.lng_deg + east / km_per_deg_lng,
            ));
        }
    }
    Ok(out)
}

/// Physical metadata attached to one image: when it was taken and where each
/// of its patches sits on the globe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalContext {
    pub timestamp: Timestamp,
    pub center: GeoPoint,
    pub n_row: usize,
    pub n_col: usize,
    pub patch_centers: Vec<GeoPoint>,
}

impl PhysicalContext {
    pub fn extract(timestamp: Timestamp, center: GeoPoint, spec: &ImageSpec) -> Result<Self> {
        let patch_centers = patch_centers(&center, spec)?;
        let side = spec.grid_side();
        Ok(Self {
            timestamp,
            center,
            n_row: side,
            n_col: side,
            patch_centers,
        })
    }

    /// Hour of the year split back into `(t_day, t_hour)`.
    pub fn day_hour(&self) -> (f64, f64) {
        let t = temporal_position(&self.timestamp) as u32;
        ((t / 24) as f64, (t % 24) as f64)
    }

    pub fn patch(&self, row: usize, col: usize) -> &GeoPoint {
        &self.patch_centers[row * self.n_col + col]
    }
}
