//! Track CSV and image file formats.
//!
//! Track CSV: header `sequence_id,datetime,lat,lng,pressure`, ISO-8601
//! datetimes at hour resolution (`2018-10-23T01:00:00`), UTF-8, LF endings.
//! Rows of one sequence are contiguous and hourly.
//!
//! Images: 16-bit binary PGM (`P5`, maxval 65535) per record, plus a sidecar
//! `meta.json` holding `{side_px, patch_px, km_per_px}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::geo::ImageSpec;

use super::render::Image;
use super::track::{Record, TyphoonTrack};

pub const CSV_HEADER: [&str; 5] = ["sequence_id", "datetime", "lat", "lng", "pressure"];
const DATETIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> PipeError {
    PipeError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn save_csv(tracks: &[TyphoonTrack], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for t in tracks {
        for r in &t.records {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                t.sequence_id,
                r.datetime.format(DATETIME_FORMAT),
                r.lat,
                r.lng,
                r.pressure
            ));
        }
    }
    fs::write(path, out).map_err(|e| PipeError::io(path, e))
}

pub fn load_csv(path: &Path) -> Result<Vec<TyphoonTrack>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| malformed(path, 1, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(malformed(
            path,
            1,
            format!("expected header {}", CSV_HEADER.join(",")),
        ));
    }

    let mut tracks: Vec<TyphoonTrack> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let number = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(path, line, format!("bad {} {:?}", CSV_HEADER[i], field(i))))
        };
        let id = field(0);
        if id.is_empty() {
            return Err(malformed(path, line, "empty sequence_id"));
        }
        let datetime = NaiveDateTime::parse_from_str(field(1), DATETIME_FORMAT)
            .map_err(|e| malformed(path, line, format!("bad datetime {:?}: {e}", field(1))))?;
        let record = Record {
            datetime,
            lat: number(2)?,
            lng: number(3)?,
            pressure: number(4)?,
        };
        match tracks.last_mut() {
            Some(t) if t.sequence_id == id => t.records.push(record),
            _ => {
                if tracks.iter().any(|t| t.sequence_id == id) {
                    return Err(malformed(
                        path,
                        line,
                        format!("rows of sequence {id} are not contiguous"),
                    ));
                }
                tracks.push(TyphoonTrack {
                    sequence_id: id.to_string(),
                    records: vec![record],
                });
            }
        }
    }
    for t in &tracks {
        t.validate()?;
    }
    Ok(tracks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub side_px: usize,
    pub patch_px: usize,
    pub km_per_px: f64,
}

impl From<ImageSpec> for ImageMeta {
    fn from(s: ImageSpec) -> Self {
        Self {
            side_px: s.image_px,
            patch_px: s.patch_px,
            km_per_px: s.km_per_px,
        }
    }
}

impl From<ImageMeta> for ImageSpec {
    fn from(m: ImageMeta) -> Self {
        Self {
            image_px: m.side_px,
            patch_px: m.patch_px,
            km_per_px: m.km_per_px,
        }
    }
}

pub fn write_pgm(image: &Image, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + image.pixels.len() * 2);
    write!(buf, "P5\n{} {}\n65535\n", image.side, image.side).expect("write to vec");
    for &v in &image.pixels {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| PipeError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| PipeError::io(path, e))?;
    let bad = |m: &str| PipeError::Data(format!("{}: {m}", path.display()));
    // header: magic, width, height, maxval separated by single whitespace runs
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if w != h {
        return Err(bad("image is not square"));
    }
    let wide = maxval > 255;
    let bpp = if wide { 2 } else { 1 };
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != w * h * bpp {
        return Err(bad("pixel data has the wrong length"));
    }
    let pixels = if wide {
        body.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / maxval as f32)
            .collect()
    } else {
        body.iter().map(|&b| b as f32 / maxval as f32).collect()
    };
    Ok(Image { side: w, pixels })
}

/// Quantize as the PGM writer does, so in-memory and on-disk images agree.
pub fn quantize(image: &Image) -> Image {
    Image {
        side: image.side,
        pixels: image
            .pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16 as f32 / 65535.0)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_track, SimParams};

    #[test]
    fn empty_file_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "sequence_id,datetime,lat,lng,pressure\n").unwrap();
        assert!(load_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn roundtrip_five_tracks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let tracks: Vec<_> = (0..5)
            .map(|seed| {
                synth_track(&SimParams { seed, ..Default::default() }, 30)
                    .unwrap()
                    .track
            })
            .collect();
        save_csv(&tracks, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.len(), 5);
        for (a, b) in tracks.iter().zip(&loaded) {
            assert_eq!(a.sequence_id, b.sequence_id);
            for (ra, rb) in a.records.iter().zip(&b.records) {
                assert_eq!(ra.datetime, rb.datetime);
                assert!((ra.lat - rb.lat).abs() <= 5e-7);
                assert!((ra.lng - rb.lng).abs() <= 5e-7);
                assert!((ra.pressure - rb.pressure).abs() <= 5e-7);
            }
        }
        save_csv(&loaded, &path).unwrap();
        assert_eq!(load_csv(&path).unwrap(), loaded);
    }

    #[test]
    fn gap_is_reported_with_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(
            &path,
            "sequence_id,datetime,lat,lng,pressure\n\
             A,2018-10-23T01:00:00,11.65,151.61,974.2\n\
             A,2018-10-23T03:00:00,11.7,151.41,973.3\n",
        )
        .unwrap();
        let err = load_csv(&path).unwrap_err().to_string();
        assert!(err.contains("2018-10-23 03:00:00"), "{err}");
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(
            &path,
            "sequence_id,datetime,lat,lng,pressure\n\
             A,2018-10-23T01:00:00,11.65,151.61,974.2\n\
             A,2018-10-23T02:00:00,north,151.41,973.3\n",
        )
        .unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(matches!(err, PipeError::Malformed { line: 3, .. }), "{err}");
    }

    #[test]
    fn pgm_roundtrip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.pgm");
        let img = Image {
            side: 3,
            pixels: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0],
        };
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back, quantize(&img));
        assert!(back.pixels.iter().zip(&img.pixels).all(|(a, b)| (a - b).abs() < 1e-4));
    }
}
