use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Series;
use crate::error::{PipeError, Result};
use crate::geo::GeoPoint;

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(PipeError::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(PipeError::Data("cannot score an empty series".into()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Haversine distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn great_circle_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (p1, p2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dphi = p2 - p1;
    let dlambda = (b.lng_deg - a.lng_deg).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Index `k` holds lead time `k + 1` hours.
    pub mae_per_lead: Vec<f64>,
    pub rmse_per_lead: Vec<f64>,
}

impl VariableMetrics {
    /// `errors[k]` holds the signed errors at lead `k + 1`.
    fn from_errors(errors: &[Vec<f64>]) -> Self {
        let zeros_like = |e: &Vec<f64>| vec![0.0; e.len()];
        let per_lead = |f: fn(&[f64], &[f64]) -> Result<f64>| -> Vec<f64> {
            errors
                .iter()
                .map(|e| f(e, &zeros_like(e)).expect("non-empty lead"))
                .collect()
        };
        let all: Vec<f64> = errors.iter().flatten().copied().collect();
        let zeros = vec![0.0; all.len()];
        Self {
            mae: mae(&all, &zeros).expect("non-empty"),
            rmse: rmse(&all, &zeros).expect("non-empty"),
            mae_per_lead: per_lead(mae),
            rmse_per_lead: per_lead(rmse),
        }
    }
}

/// Scores of a set of forecasts. Distances are great-circle errors between
/// predicted and true positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: usize,
    pub n_forecasts: usize,
    pub n_scored: usize,
    pub parse_failure_count: usize,
    pub pressure: VariableMetrics,
    pub latitude: VariableMetrics,
    pub longitude: VariableMetrics,
    /// Mean distance over all leads.
    pub distance_mae_km: f64,
    /// Mean distance at the last lead.
    pub distance_terminal_km: f64,
    pub distance_per_lead_km: Vec<f64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| PipeError::io(path, e))
    }
}

fn check_truth(truth: &Series, horizon: usize) -> Result<()> {
    if truth.len() != horizon || truth.longitude.len() != horizon || truth.pressure.len() != horizon {
        return Err(PipeError::Shape(format!(
            "truth has {} leads, expected {horizon}",
            truth.len()
        )));
    }
    Ok(())
}

fn usable(forecast: Option<&Series>, horizon: usize) -> Option<&Series> {
    forecast.filter(|f| f.len() == horizon && f.longitude.len() == horizon && f.pressure.len() == horizon)
}

/// Score aligned forecasts. `None` (or a forecast of the wrong length) counts
/// as a parse failure and is left out of every mean.
pub fn evaluate(forecasts: &[Option<Series>], truths: &[Series], horizon: usize) -> Result<MetricsReport> {
    if forecasts.len() != truths.len() {
        return Err(PipeError::Shape(format!(
            "{} forecasts for {} truths",
            forecasts.len(),
            truths.len()
        )));
    }
    if horizon == 0 {
        return Err(PipeError::Config("horizon must be positive".into()));
    }
    let mut err_p = vec![Vec::new(); horizon];
    let mut err_lat = vec![Vec::new(); horizon];
    let mut err_lng = vec![Vec::new(); horizon];
    let mut dist = vec![Vec::new(); horizon];
    let mut failures = 0;
    for (f, t) in forecasts.iter().zip(truths) {
        check_truth(t, horizon)?;
        let Some(f) = usable(f.as_ref(), horizon) else {
            failures += 1;
            continue;
        };
        for k in 0..horizon {
            err_p[k].push(f.pressure[k] - t.pressure[k]);
            err_lat[k].push(f.latitude[k] - t.latitude[k]);
            err_lng[k].push(f.longitude[k] - t.longitude[k]);
            dist[k].push(great_circle_km(
                &GeoPoint::new(f.latitude[k], f.longitude[k]),
                &GeoPoint::new(t.latitude[k], t.longitude[k]),
            ));
        }
    }
    let scored = forecasts.len() - failures;
    if scored == 0 {
        return Err(PipeError::Data(format!(
            "none of the {} forecasts could be parsed",
            forecasts.len()
        )));
    }
    let distance_per_lead_km: Vec<f64> = dist.iter().map(|d| d.iter().sum::<f64>() / d.len() as f64).collect();
    let all: Vec<f64> = dist.iter().flatten().copied().collect();
    Ok(MetricsReport {
        horizon,
        n_forecasts: forecasts.len(),
        n_scored: scored,
        parse_failure_count: failures,
        pressure: VariableMetrics::from_errors(&err_p),
        latitude: VariableMetrics::from_errors(&err_lat),
        longitude: VariableMetrics::from_errors(&err_lng),
        distance_mae_km: all.iter().sum::<f64>() / all.len() as f64,
        distance_terminal_km: distance_per_lead_km[horizon - 1],
        distance_per_lead_km,
    })
}

/// One row of the regression dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub variable: String,
    pub lead_time: usize,
    pub truth: f64,
    pub pred: f64,
}

pub const VARIABLES: [&str; 3] = ["pressure", "latitude", "longitude"];

fn series_values<'a>(s: &'a Series, variable: &str) -> &'a [f64] {
    match variable {
        "pressure" => &s.pressure,
        "latitude" => &s.latitude,
        _ => &s.longitude,
    }
}

/// Rows `variable, lead_time, truth, pred` for every parsed forecast;
/// lead times start at 1.
pub fn regression_rows(forecasts: &[Option<Series>], truths: &[Series], horizon: usize) -> Result<Vec<RegressionRow>> {
    if forecasts.len() != truths.len() {
        return Err(PipeError::Shape("forecasts and truths are not aligned".into()));
    }
    let mut rows = Vec::new();
    for (f, t) in forecasts.iter().zip(truths) {
        check_truth(t, horizon)?;
        let Some(f) = usable(f.as_ref(), horizon) else {
            continue;
        };
        for var in VARIABLES {
            let (pv, tv) = (series_values(f, var), series_values(t, var));
            for k in 0..horizon {
                rows.push(RegressionRow {
                    variable: var.to_string(),
                    lead_time: k + 1,
                    truth: tv[k],
                    pred: pv[k],
                });
            }
        }
    }
    Ok(rows)
}

pub fn regression_dump(forecasts: &[Option<Series>], truths: &[Series], horizon: usize, path: &Path) -> Result<usize> {
    let rows = regression_rows(forecasts, truths, horizon)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| PipeError::Data(format!("{}: {e}", path.display())))?;
    for r in &rows {
        w.serialize(r)
            .map_err(|e| PipeError::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| PipeError::io(path, e))?;
    Ok(rows.len())
}

pub fn load_regression(path: &Path) -> Result<Vec<RegressionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipeError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| PipeError::Malformed {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn series(p: f64, lat: f64, lng: f64, n: usize) -> Series {
        Series {
            latitude: (0..n).map(|k| lat + 0.1 * k as f64).collect(),
            longitude: (0..n).map(|k| lng - 0.2 * k as f64).collect(),
            pressure: (0..n).map(|k| p - k as f64).collect(),
        }
    }

    #[test]
    fn error_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(rmse(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn distance_examples() {
        let o = GeoPoint::new(0.0, 0.0);
        assert_eq!(great_circle_km(&o, &o), 0.0);
        let one_degree = EARTH_RADIUS_KM * PI / 180.0;
        assert_abs_diff_eq!(great_circle_km(&o, &GeoPoint::new(0.0, 1.0)), one_degree, epsilon = 1e-9);
        assert_abs_diff_eq!(great_circle_km(&o, &GeoPoint::new(0.0, 1.0)), 111.195, epsilon = 1e-3);
        let anti = great_circle_km(&GeoPoint::new(30.0, 40.0), &GeoPoint::new(-30.0, -140.0));
        assert_abs_diff_eq!(anti, PI * EARTH_RADIUS_KM, epsilon = 1e-6);
        assert_abs_diff_eq!(anti, 20015.1, epsilon = 0.1);
    }

    #[test]
    fn perfect_and_biased_forecasts() {
        let truths: Vec<Series> = (0..4).map(|i| series(960.0 + i as f64, 15.0, 140.0, 12)).collect();
        let perfect: Vec<Option<Series>> = truths.iter().cloned().map(Some).collect();
        let r = evaluate(&perfect, &truths, 12).unwrap();
        assert_eq!(r.pressure.mae, 0.0);
        assert_eq!(r.latitude.rmse, 0.0);
        assert_eq!(r.distance_mae_km, 0.0);
        assert_eq!(r.distance_terminal_km, 0.0);
        assert_eq!(r.parse_failure_count, 0);

        let biased: Vec<Option<Series>> = truths
            .iter()
            .map(|t| {
                let mut s = t.clone();
                s.pressure.iter_mut().for_each(|p| *p += 1.0);
                Some(s)
            })
            .collect();
        let r = evaluate(&biased, &truths, 12).unwrap();
        assert_abs_diff_eq!(r.pressure.mae, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.pressure.rmse, 1.0, epsilon = 1e-12);
        assert_eq!(r.latitude.mae, 0.0);
        assert_eq!(r.longitude.rmse, 0.0);
        assert_eq!(r.distance_mae_km, 0.0);
    }

    #[test]
    fn failures_are_counted_and_excluded() {
        let truths: Vec<Series> = (0..3).map(|_| series(950.0, 20.0, 130.0, 12)).collect();
        let mut off = truths[0].clone();
        off.latitude[11] += 1.0;
        let forecasts = vec![Some(off), None, Some(series(950.0, 20.0, 130.0, 5))];
        let r = evaluate(&forecasts, &truths, 12).unwrap();
        assert_eq!((r.n_forecasts, r.n_scored, r.parse_failure_count), (3, 1, 2));
        assert_abs_diff_eq!(r.latitude.mae_per_lead[11], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.latitude.mae, 1.0 / 12.0, epsilon = 1e-12);
        assert!(evaluate(&[None], &truths[..1], 12).is_err());
    }

    #[test]
    fn regression_dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.csv");
        let truths: Vec<Series> = (0..5).map(|i| series(970.0 - i as f64, 12.0, 150.0, 12)).collect();
        let forecasts: Vec<Option<Series>> = truths
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut s = t.clone();
                s.pressure[i] += 1.0 / 3.0;
                s.longitude[0] -= 0.123_456_789;
                Some(s)
            })
            .collect();
        let n = regression_dump(&forecasts, &truths, 12, &path).unwrap();
        assert_eq!(n, 5 * 12 * 3);
        let rows = load_regression(&path).unwrap();
        assert_eq!(rows.len(), n);
        let report = evaluate(&forecasts, &truths, 12).unwrap();
        for (var, m) in [("pressure", &report.pressure), ("longitude", &report.longitude)] {
            let sel: Vec<&RegressionRow> = rows.iter().filter(|r| r.variable == var).collect();
            let p: Vec<f64> = sel.iter().map(|r| r.pred).collect();
            let t: Vec<f64> = sel.iter().map(|r| r.truth).collect();
            assert_abs_diff_eq!(mae(&p, &t).unwrap(), m.mae, epsilon = 1e-9);
            assert_abs_diff_eq!(rmse(&p, &t).unwrap(), m.rmse, epsilon = 1e-9);
        }

        let perfect: Vec<Option<Series>> = truths.iter().cloned().map(Some).collect();
        regression_dump(&perfect, &truths, 12, &path).unwrap();
        assert!(load_regression(&path).unwrap().iter().all(|r| r.truth == r.pred));
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-89.0..89.0f64, -180.0..180.0f64).prop_map(|(a, b)| GeoPoint::new(a, b))
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(v in prop::collection::vec(-100.0..100.0f64, 1..50)) {
            let zeros = vec![0.0; v.len()];
            prop_assert!(rmse(&v, &zeros).unwrap() + 1e-12 >= mae(&v, &zeros).unwrap());
        }

        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            let ab = great_circle_km(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - great_circle_km(&b, &a)).abs() < 1e-9);
            prop_assert!(ab <= great_circle_km(&a, &c) + great_circle_km(&c, &b) + 1e-6);
            prop_assert_eq!(great_circle_km(&a, &a), 0.0);
        }

        #[test]
        fn metrics_ignore_instance_order(
            offsets in prop::collection::vec((-5.0..5.0f64, -1.0..1.0f64), 2..8),
            rot in 0usize..8,
        ) {
            let truths: Vec<Series> = (0..offsets.len()).map(|i| series(960.0 + i as f64, 15.0, 140.0, 4)).collect();
            let forecasts: Vec<Option<Series>> = truths.iter().zip(&offsets).map(|(t, (dp, dl))| {
                let mut s = t.clone();
                s.pressure.iter_mut().for_each(|p| *p += dp);
                s.latitude.iter_mut().for_each(|l| *l += dl);
                Some(s)
            }).collect();
            let a = evaluate(&forecasts, &truths, 4).unwrap();
            let k = rot % truths.len();
            let mut f2 = forecasts.clone();
            let mut t2 = truths.clone();
            f2.rotate_left(k);
            t2.rotate_left(k);
            let b = evaluate(&f2, &t2, 4).unwrap();
            prop_assert!((a.pressure.mae - b.pressure.mae).abs() < 1e-9);
            prop_assert!((a.latitude.rmse - b.latitude.rmse).abs() < 1e-9);
            prop_assert!((a.distance_mae_km - b.distance_mae_km).abs() < 1e-9);
            let lead_mean = a.distance_per_lead_km.iter().sum::<f64>() / 4.0;
            prop_assert!((lead_mean - a.distance_mae_km).abs() < 1e-9);
            for k in 0..4 {
                prop_assert!(a.pressure.rmse_per_lead[k] + 1e-12 >= a.pressure.mae_per_lead[k]);
            }
        }
    }
}
