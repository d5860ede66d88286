//! Synthetic cyclone tracks.
//!
//! Motion follows a latitude-dependent steering flow: storms south of the
//! recurvature latitude drift west-northwest, storms north of it recurve to
//! the northeast. Pressure responds with a lag to a latent structure variable
//! `s(t)`, an Ornstein-Uhlenbeck process that only the rendered imagery
//! exposes: the change from hour `t` to `t + 1` is driven by `s(t - 11)`. The
//! next twelve hours of pressure change after hour `T` are therefore driven by
//! `s(T - 11..=T)`, exactly the structure seen in the last twelve images, while
//! the numeric history reflects the older, decorrelated part of the process.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::geo::GeoPoint;

use super::track::{Record, TyphoonTrack};

/// Lag between the latent structure and its pressure response, in hours.
pub const STRUCTURE_LAG: usize = 11;
/// Correlation time of the latent structure, in hours.
const STRUCTURE_TAU: f64 = 4.0;

const MIN_PRESSURE: f64 = 880.0;
const MAX_PRESSURE: f64 = 1012.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub seed: u64,
    /// Latitude at which the steering flow turns from westward to eastward.
    pub recurve_lat: f64,
    /// Extra poleward drift, degrees per hour.
    pub beta_drift: f64,
    /// Pressure response to the latent structure, hPa per hour per unit.
    pub intensity_cue_gain: f64,
    /// Standard deviation of the hourly motion perturbation, degrees.
    pub noise_sigma: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            seed: 0,
            recurve_lat: 25.0,
            beta_drift: 0.02,
            intensity_cue_gain: 1.0,
            noise_sigma: 0.02,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_cue_gain > 0.0 && self.beta_drift >= 0.0) {
            return Err(PipeError::Config(format!(
                "simulation gains must be positive: {self:?}"
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.recurve_lat.is_finite() {
            return Err(PipeError::Config(format!(
                "noise_sigma must be non-negative and recurve_lat finite: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A track together with the latent structure behind its imagery.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrack {
    pub track: TyphoonTrack,
    /// `s(t)` for every record.
    pub hidden: Vec<f64>,
}

/// Fraction of the way into the recurved (eastward) regime.
pub fn recurvature(lat: f64, recurve_lat: f64) -> f64 {
    1.0 / (1.0 + (-(lat - recurve_lat) / 2.5).exp())
}

/// Steering flow in degrees per hour `(east, north)`.
pub fn steering(lat: f64, params: &SimParams) -> (f64, f64) {
    let w = recurvature(lat, params.recurve_lat);
    let east = -0.30 * (1.0 - w) + 0.35 * w;
    let north = 0.10 * (1.0 - w) + 0.25 * w + params.beta_drift;
    (east, north)
}

/// Track with a genesis point, start time and latent process drawn from the seed.
pub fn synth_track(params: &SimParams, length: usize) -> Result<SynthTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let start = GeoPoint::new(rng.gen_range(8.0..20.0), rng.gen_range(128.0..160.0));
    synth_track_with(params, start, length, &mut rng)
}

/// Track starting from a fixed genesis point.
pub fn synth_track_from(params: &SimParams, start: GeoPoint, length: usize) -> Result<SynthTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    synth_track_with(params, start, length, &mut rng)
}

fn synth_track_with(
    params: &SimParams,
    start: GeoPoint,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SynthTrack> {
    params.validate()?;
    if length == 0 {
        return Err(PipeError::Config("track length must be positive".into()));
    }
    let year = rng.gen_range(2010..2021);
    let day = rng.gen_range(150..300);
    let hour = rng.gen_range(0..24);
    let t0: NaiveDateTime = NaiveDate::from_yo_opt(year, day)
        .and_then(|d| d.and_hms_opt(hour, 0, 0))
        .expect("valid synthetic start date");

    let rho = (-1.0 / STRUCTURE_TAU).exp();
    let innovation = (1.0 - rho * rho).sqrt();
    let mut s = rng.sample::<f64, _>(StandardNormal);
    let mut structure = Vec::with_capacity(length + STRUCTURE_LAG);
    for _ in 0..length + STRUCTURE_LAG {
        structure.push(s);
        s = rho * s + innovation * rng.sample::<f64, _>(StandardNormal);
    }

    let (mut lat, mut lng) = (start.lat_deg, start.lng_deg);
    let mut pressure = rng.gen_range(985.0..1000.0);
    let (mut eu, mut ev) = (0.0, 0.0);
    let mut records = Vec::with_capacity(length);
    for t in 0..length {
        records.push(Record {
            datetime: t0 + Duration::hours(t as i64),
            lat,
            lng,
            pressure,
        });
        let (u, v) = steering(lat, params);
        eu = 0.8 * eu + params.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        ev = 0.8 * ev + params.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        lat = (lat + v + ev).clamp(-80.0, 80.0);
        lng += u + eu;

        let w = recurvature(lat, params.recurve_lat);
        // structure[t] is s(t - LAG); the image of hour t shows structure[t + LAG]
        let trend = -params.intensity_cue_gain * structure[t] + 0.45 * w - 0.25 * (1.0 - w);
        let jitter = 0.1 * rng.sample::<f64, _>(StandardNormal);
        pressure = (pressure + trend + jitter).clamp(MIN_PRESSURE, MAX_PRESSURE);
    }
    let hidden = structure[STRUCTURE_LAG..].to_vec();
    Ok(SynthTrack {
        track: TyphoonTrack {
            sequence_id: format!("SYN{:06}", params.seed),
            records,
        },
        hidden,
    })
}
