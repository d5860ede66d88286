//! Text prompt and label construction, and the inverse parser.
//!
//! Coordinates are printed rounded to two decimals and pressure to one, with
//! trailing zeros trimmed down to a single fractional digit (`11.70` prints as
//! `11.7`, `148.00` as `148.0`).

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};

use super::track::{ForecastInstance, Record};

pub const IMAGE_TAG: &str = "<image>";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:00:00";

pub fn system_prompt(history: usize, horizon: usize) -> String {
    format!(
        "You are a typhoon forecasting expert. Below are the past {history} hours of typhoon data \
         and the corresponding satellite images. Your task is to forecast the hourly data of the \
         typhoon for the next {horizon} hours, providing the forecast latitude, longitude, \
         pressure in the same format as the past data format. "
    )
}

/// Round to `decimals` places and trim trailing zeros, keeping at least one
/// fractional digit.
pub fn format_value(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    match s.find('.') {
        Some(dot) => {
            let trimmed = s.trim_end_matches('0');
            if trimmed.len() <= dot + 1 {
                s[..dot + 2].to_string()
            } else {
                trimmed.to_string()
            }
        }
        None => s,
    }
}

fn format_array(values: impl Iterator<Item = f64>, decimals: usize) -> String {
    let items: Vec<String> = values.map(|v| format_value(v, decimals)).collect();
    format!("[{}]", items.join(", "))
}

fn series_body(records: &[Record]) -> String {
    format!(
        "{{latitude: {}, longitude: {}, pressure: {}",
        format_array(records.iter().map(|r| r.lat), 2),
        format_array(records.iter().map(|r| r.lng), 2),
        format_array(records.iter().map(|r| r.pressure), 1),
    )
}

pub fn format_timestamp(dt: &NaiveDateTime) -> String {
    dt.format(TIMESTAMP_FORMAT).to_string()
}

/// Image tags followed by the numeric history.
pub fn past_data(history: &[Record]) -> Result<String> {
    let (first, last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(PipeError::Data("history is empty".into())),
    };
    let tags = vec![IMAGE_TAG; history.len()].join(" ");
    Ok(format!(
        "The corresponding satellite images are: {tags}.  The historical hourly data from {} to {} is {}}}.",
        format_timestamp(&first.datetime),
        format_timestamp(&last.datetime),
        series_body(history),
    ))
}

pub fn label_text(label: &[Record]) -> String {
    format!("The forecast hourly data is: {}.}}", series_body(label))
}

/// `(prompt, label)` for one instance.
pub fn build_prompt(instance: &ForecastInstance) -> Result<(String, String)> {
    if instance.images.len() != instance.history.len() {
        return Err(PipeError::Data(format!(
            "{} images for {} history records",
            instance.images.len(),
            instance.history.len()
        )));
    }
    if instance.label.is_empty() {
        return Err(PipeError::Data("label is empty".into()));
    }
    let prompt = format!(
        "{}{}",
        system_prompt(instance.history.len(), instance.label.len()),
        past_data(&instance.history)?
    );
    Ok((prompt, label_text(&instance.label)))
}

/// Three forecast series parsed from text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub latitude: Vec<f64>,
    pub longitude: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl Series {
    pub fn from_records(records: &[Record]) -> Self {
        Self {
            latitude: records.iter().map(|r| r.lat).collect(),
            longitude: records.iter().map(|r| r.lng).collect(),
            pressure: records.iter().map(|r| r.pressure).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.latitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latitude.is_empty()
    }
}

fn parse_array(text: &str, key: &str) -> Result<(Vec<f64>, usize)> {
    let marker = format!("{key}: [");
    let start = text
        .find(&marker)
        .ok_or_else(|| PipeError::Parse(format!("missing `{key}` array")))?
        + marker.len();
    let len = text[start..]
        .find(']')
        .ok_or_else(|| PipeError::Parse(format!("unterminated `{key}` array")))?;
    let body = &text[start..start + len];
    let values = if body.trim().is_empty() {
        Vec::new()
    } else {
        body.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| PipeError::Parse(format!("bad `{key}` value {:?}", v.trim())))
            })
            .collect::<Result<_>>()?
    };
    Ok((values, start + len + 1))
}

/// Parse the `{latitude: [...], longitude: [...], pressure: [...]...}` body of
/// a label or of the history part of a prompt.
pub fn parse_series(text: &str) -> Result<Series> {
    let open = text
        .find('{')
        .ok_or_else(|| PipeError::Parse("missing `{`".into()))?;
    let mut rest = &text[open..];
    let (latitude, next) = parse_array(rest, "latitude")?;
    rest = &rest[next..];
    let (longitude, next) = parse_array(rest, "longitude")?;
    rest = &rest[next..];
    let (pressure, _) = parse_array(rest, "pressure")?;
    if latitude.len() != longitude.len() || latitude.len() != pressure.len() {
        return Err(PipeError::Parse(format!(
            "array lengths differ: {} latitude, {} longitude, {} pressure",
            latitude.len(),
            longitude.len(),
            pressure.len()
        )));
    }
    Ok(Series {
        latitude,
        longitude,
        pressure,
    })
}

/// Parse a label and require `horizon` values per variable.
pub fn parse_forecast(text: &str, horizon: usize) -> Result<Series> {
    let series = parse_series(text)?;
    if series.len() != horizon {
        return Err(PipeError::Parse(format!(
            "expected {horizon} values per variable, found {}",
            series.len()
        )));
    }
    Ok(series)
}

/// History series embedded in a prompt.
pub fn parse_prompt_history(prompt: &str) -> Result<Series> {
    let at = prompt
        .find("The historical hourly data")
        .ok_or_else(|| PipeError::Parse("prompt has no history section".into()))?;
    parse_series(&prompt[at..])
}
