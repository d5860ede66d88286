use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};

use pipe::data::io::quantize;
use pipe::data::prompt::{parse_prompt_history, past_data};
use pipe::data::{build_prompt, parse_forecast, render_image, synth_track, ForecastInstance, Image, Record, SimParams};
use pipe::geo::ImageSpec;

const YUTU_LAT: [f64; 24] = [
    11.65, 11.7, 11.75, 11.8, 11.85, 11.9, 11.95, 11.99, 12.04, 12.09, 12.14, 12.2, 12.26, 12.34, 12.42, 12.5,
    12.6, 12.7, 12.81, 12.93, 13.05, 13.17, 13.29, 13.4,
];
const YUTU_LNG: [f64; 24] = [
    151.61, 151.41, 151.2, 150.99, 150.79, 150.6, 150.42, 150.26, 150.11, 149.97, 149.83, 149.7, 149.57, 149.44,
    149.31, 149.18, 149.04, 148.9, 148.76, 148.61, 148.46, 148.31, 148.15, 148.0,
];
const YUTU_P: [f64; 24] = [
    974.2, 973.3, 972.5, 971.7, 970.8, 970.0, 967.5, 965.0, 962.5, 960.0, 957.5, 955.0, 954.2, 953.3, 952.5,
    951.7, 950.8, 950.0, 945.8, 941.7, 937.5, 933.3, 929.2, 925.0,
];

fn yutu() -> ForecastInstance {
    let t0 = NaiveDate::from_ymd_opt(2018, 10, 23).unwrap().and_hms_opt(1, 0, 0).unwrap();
    let records: Vec<Record> = (0..24)
        .map(|k| Record {
            datetime: t0 + Duration::hours(k as i64),
            lat: YUTU_LAT[k],
            lng: YUTU_LNG[k],
            pressure: YUTU_P[k],
        })
        .collect();
    ForecastInstance {
        sequence_id: "YUTU".into(),
        start: 0,
        history: records[..12].to_vec(),
        images: vec![Arc::new(Image::zeros(4)); 12],
        label: records[12..].to_vec(),
    }
}

// Reference prompt strings for a Typhoon Yutu window.
const SYSTEM: &str = "You are a typhoon forecasting expert. Below are the past 12 hours of typhoon data and the corresponding satellite images. Your task is to forecast the hourly data of the typhoon for the next 12 hours, providing the forecast latitude, longitude, pressure in the same format as the past data format. ";
const PAST: &str = "The corresponding satellite images are: <image> <image> <image> <image> <image> <image> <image> <image> <image> <image> <image> <image>.  The historical hourly data from 2018-10-23 01:00:00 to 2018-10-23 12:00:00 is {latitude: [11.65, 11.7, 11.75, 11.8, 11.85, 11.9, 11.95, 11.99, 12.04, 12.09, 12.14, 12.2], longitude: [151.61, 151.41, 151.2, 150.99, 150.79, 150.6, 150.42, 150.26, 150.11, 149.97, 149.83, 149.7], pressure: [974.2, 973.3, 972.5, 971.7, 970.8, 970.0, 967.5, 965.0, 962.5, 960.0, 957.5, 955.0]}.";
const LABEL: &str = "The forecast hourly data is: {latitude: [12.26, 12.34, 12.42, 12.5, 12.6, 12.7, 12.81, 12.93, 13.05, 13.17, 13.29, 13.4], longitude: [149.57, 149.44, 149.31, 149.18, 149.04, 148.9, 148.76, 148.61, 148.46, 148.31, 148.15, 148.0], pressure: [954.2, 953.3, 952.5, 951.7, 950.8, 950.0, 945.8, 941.7, 937.5, 933.3, 929.2, 925.0].}";

#[test]
fn yutu_prompt_is_byte_exact() {
    let inst = yutu();
    let (prompt, label) = build_prompt(&inst).unwrap();
    assert_eq!(past_data(&inst.history).unwrap(), PAST);
    assert_eq!(prompt, format!("{SYSTEM}{PAST}"));
    assert_eq!(label, LABEL);

    let back = parse_prompt_history(&prompt).unwrap();
    assert_eq!(back.latitude, YUTU_LAT[..12]);
    assert_eq!(back.pressure, YUTU_P[..12]);
    let fc = parse_forecast(&label, 12).unwrap();
    assert_eq!(fc.longitude, YUTU_LNG[12..]);
    assert_eq!(fc.pressure, YUTU_P[12..]);
}

/// Held-out R² of an ordinary least-squares fit with intercept.
fn probe_r2(x_train: &[Vec<f64>], y_train: &[f64], x_test: &[Vec<f64>], y_test: &[f64]) -> f64 {
    let design = |x: &[Vec<f64>]| {
        let cols = x[0].len() + 1;
        DMatrix::from_fn(x.len(), cols, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] })
    };
    let a = design(x_train);
    let w = a
        .clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(y_train), 1e-9)
        .unwrap();
    let pred = design(x_test) * w;
    let mean = y_test.iter().sum::<f64>() / y_test.len() as f64;
    let ss_res: f64 = pred.iter().zip(y_test).map(|(p, y)| (y - p).powi(2)).sum();
    let ss_tot: f64 = y_test.iter().map(|y| (y - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// 4x4 block means of the image.
fn image_features(img: &Image) -> Vec<f64> {
    let b = 4;
    let n = img.side / b;
    let mut out = Vec::with_capacity(n * n);
    for br in 0..n {
        for bc in 0..n {
            let mut s = 0.0;
            for r in 0..b {
                for c in 0..b {
                    s += img.get(br * b + r, bc * b + c) as f64;
                }
            }
            out.push(s / (b * b) as f64);
        }
    }
    out
}

#[test]
fn images_carry_the_hidden_structure_and_history_does_not() {
    let spec = ImageSpec::with_footprint(32, 16);
    let history = 12;
    // (track index, image features, numeric-history features, hidden structure)
    let mut samples = Vec::new();
    let mut seed = 0u64;
    while samples.len() < 1000 {
        let p = SimParams { seed, ..SimParams::default() };
        let synth = synth_track(&p, 48).unwrap();
        for t in history - 1..48 {
            let rec = &synth.track.records[t];
            let img = quantize(&render_image(rec, synth.hidden[t], &spec, p.seed));
            let hist: Vec<f64> = synth.track.records[t + 1 - history..=t]
                .iter()
                .flat_map(|r| [r.lat, r.lng, r.pressure])
                .collect();
            samples.push((seed, image_features(&img), hist, synth.hidden[t]));
        }
        seed += 1;
    }
    samples.truncate(1000);
    // hold out whole tracks so neighbouring hours cannot leak
    let cut = samples[700].0;
    let (train, test): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.0 < cut);
    let y_tr: Vec<f64> = train.iter().map(|s| s.3).collect();
    let y_te: Vec<f64> = test.iter().map(|s| s.3).collect();

    let img_tr: Vec<_> = train.iter().map(|s| s.1.clone()).collect();
    let img_te: Vec<_> = test.iter().map(|s| s.1.clone()).collect();
    let r2_img = probe_r2(&img_tr, &y_tr, &img_te, &y_te);

    let his_tr: Vec<_> = train.iter().map(|s| s.2.clone()).collect();
    let his_te: Vec<_> = test.iter().map(|s| s.2.clone()).collect();
    let r2_hist = probe_r2(&his_tr, &y_tr, &his_te, &y_te);

    println!("probe R2: image {r2_img:.3}, history {r2_hist:.3}");
    assert!(r2_img > 0.5, "image probe R2 {r2_img}");
    assert!(r2_hist < 0.1, "history probe R2 {r2_hist}");
}
