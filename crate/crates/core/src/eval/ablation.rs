use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PipeError, Result};
use crate::indexing::Scheme;
use crate::model::{ModelConfig, PeMode, TrainConfig};

use super::metrics::MetricsReport;
use super::Experiment;

/// A configuration dimension varied by the ablation runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    UseVision,
    Scheme,
    Negate,
    Pe,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::UseVision => "use_vision",
            Axis::Scheme => "scheme",
            Axis::Negate => "negate",
            Axis::Pe => "pe",
        }
    }

    pub fn cardinality(&self) -> usize {
        match self {
            Axis::UseVision | Axis::Negate => 2,
            Axis::Scheme | Axis::Pe => 3,
        }
    }

    /// Every setting of this axis applied to `cfg`, with a short label.
    fn variants(&self, cfg: &ModelConfig) -> Vec<(String, ModelConfig)> {
        match self {
            Axis::UseVision => [true, false]
                .into_iter()
                .map(|v| (format!("use_vision={v}"), ModelConfig { use_vision: v, ..cfg.clone() }))
                .collect(),
            Axis::Negate => [true, false]
                .into_iter()
                .map(|v| {
                    (
                        format!("negate={v}"),
                        ModelConfig {
                            negate_vision_ids: v,
                            ..cfg.clone()
                        },
                    )
                })
                .collect(),
            Axis::Scheme => Scheme::ALL
                .into_iter()
                .map(|s| (format!("scheme={s}"), ModelConfig { scheme: s, ..cfg.clone() }))
                .collect(),
            Axis::Pe => PeMode::ALL
                .into_iter()
                .map(|p| (format!("pe={p}"), ModelConfig { pe: p, ..cfg.clone() }))
                .collect(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = PipeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "use_vision" | "vision" => Ok(Axis::UseVision),
            "scheme" => Ok(Axis::Scheme),
            "negate" => Ok(Axis::Negate),
            "pe" => Ok(Axis::Pe),
            other => Err(PipeError::Config(format!(
                "unknown ablation axis {other:?} (expected use_vision, scheme, negate or pe)"
            ))),
        }
    }
}

/// Comma-separated axis list, duplicates rejected.
pub fn parse_axes(s: &str) -> Result<Vec<Axis>> {
    let mut axes: Vec<Axis> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let a: Axis = part.parse()?;
        if axes.contains(&a) {
            return Err(PipeError::Config(format!("axis {a} listed twice")));
        }
        axes.push(a);
    }
    if axes.is_empty() {
        return Err(PipeError::Config("no ablation axes given".into()));
    }
    Ok(axes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub name: String,
    pub cfg: ModelConfig,
}

/// Cartesian product of the axes over `base`; the first axis varies slowest.
pub fn grid_cells(base: &ModelConfig, axes: &[Axis]) -> Vec<Cell> {
    let mut cells = vec![Cell {
        name: String::new(),
        cfg: base.clone(),
    }];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                axis.variants(&c.cfg).into_iter().map(move |(label, cfg)| Cell {
                    name: if c.name.is_empty() {
                        label
                    } else {
                        format!("{} {label}", c.name)
                    },
                    cfg,
                })
            })
            .collect();
    }
    cells
}

/// The full method: vision, physics indexing with negative mapping and
/// variant-frequency encoding.
pub fn pipe_config(base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        use_vision: true,
        scheme: Scheme::Physics,
        negate_vision_ids: true,
        pe: PeMode::Variant,
        ..base.clone()
    }
}

/// The published ablation rows, each removing one component from the full
/// method.
pub fn table_cells(base: &ModelConfig) -> Vec<Cell> {
    let full = pipe_config(base);
    let row = |name: &str, cfg: ModelConfig| Cell {
        name: name.to_string(),
        cfg,
    };
    vec![
        row("w/o vision", ModelConfig { use_vision: false, ..full.clone() }),
        row(
            "w/o 3D indexing (using sequence)",
            ModelConfig { scheme: Scheme::Sequential, ..full.clone() },
        ),
        row(
            "w/o physics-informed indexing (using 3D)",
            ModelConfig { scheme: Scheme::ThreeD, ..full.clone() },
        ),
        row(
            "w/o negative indexing",
            ModelConfig { negate_vision_ids: false, ..full.clone() },
        ),
        row("w/o entire sinusoidal function", ModelConfig { pe: PeMode::None, ..full.clone() }),
        row(
            "w/o variant-frequency sinusoidal function",
            ModelConfig { pe: PeMode::Standard, ..full.clone() },
        ),
        row("PIPE", full),
    ]
}

/// Outcome of one (cell, seed) training and evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub seed: u64,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
    pub final_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub cfg: ModelConfig,
    pub runs_ok: usize,
    pub runs_failed: usize,
    /// Median over successful seeds.
    pub median: Option<SummaryMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub pressure_mae: f64,
    pub pressure_rmse: f64,
    pub latitude_mae: f64,
    pub latitude_rmse: f64,
    pub longitude_mae: f64,
    pub longitude_rmse: f64,
    pub distance_mae_km: f64,
    pub distance_terminal_km: f64,
    pub parse_failures: f64,
}

impl SummaryMetrics {
    fn of(r: &MetricsReport) -> Self {
        Self {
            pressure_mae: r.pressure.mae,
            pressure_rmse: r.pressure.rmse,
            latitude_mae: r.latitude.mae,
            latitude_rmse: r.latitude.rmse,
            longitude_mae: r.longitude.mae,
            longitude_rmse: r.longitude.rmse,
            distance_mae_km: r.distance_mae_km,
            distance_terminal_km: r.distance_terminal_km,
            parse_failures: r.parse_failure_count as f64,
        }
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn median_summary(reports: &[&MetricsReport]) -> Option<SummaryMetrics> {
    let all: Vec<SummaryMetrics> = reports.iter().map(|r| SummaryMetrics::of(r)).collect();
    let med = |f: fn(&SummaryMetrics) -> f64| median(&all.iter().map(f).collect::<Vec<_>>());
    Some(SummaryMetrics {
        pressure_mae: med(|s| s.pressure_mae)?,
        pressure_rmse: med(|s| s.pressure_rmse)?,
        latitude_mae: med(|s| s.latitude_mae)?,
        latitude_rmse: med(|s| s.latitude_rmse)?,
        longitude_mae: med(|s| s.longitude_mae)?,
        longitude_rmse: med(|s| s.longitude_rmse)?,
        distance_mae_km: med(|s| s.distance_mae_km)?,
        distance_terminal_km: med(|s| s.distance_terminal_km)?,
        parse_failures: med(|s| s.parse_failures)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    pub seconds: f64,
}

impl AblationTable {
    pub fn cell(&self, name: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == name)
    }

    /// One row per cell, metrics as medians over seeds.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "model,use_vision,scheme,negate,pe,runs_ok,runs_failed,pressure_mae,pressure_rmse,\
             latitude_mae,latitude_rmse,longitude_mae,longitude_rmse,distance_mae_km,\
             distance_terminal_km,parse_failures\n",
        );
        for c in &self.cells {
            let m = c.median;
            let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
            out.push_str(&format!(
                "\"{}\",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.cell.replace('"', "\"\""),
                c.cfg.use_vision,
                c.cfg.scheme,
                c.cfg.negate_vision_ids,
                c.cfg.pe,
                c.runs_ok,
                c.runs_failed,
                f(m.map(|m| m.pressure_mae)),
                f(m.map(|m| m.pressure_rmse)),
                f(m.map(|m| m.latitude_mae)),
                f(m.map(|m| m.latitude_rmse)),
                f(m.map(|m| m.longitude_mae)),
                f(m.map(|m| m.longitude_rmse)),
                f(m.map(|m| m.distance_mae_km)),
                f(m.map(|m| m.distance_terminal_km)),
                f(m.map(|m| m.parse_failures)),
            ));
        }
        fs::write(path, out).map_err(|e| PipeError::io(path, e))
    }

    /// One row per (cell, seed), failures included with their message.
    pub fn write_runs_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "model,seed,status,pressure_mae,distance_mae_km,distance_terminal_km,parse_failures,final_loss,seconds\n",
        );
        for r in &self.runs {
            let status = r.error.as_deref().map_or("ok".to_string(), |e| format!("error: {e}"));
            let (p, d, dt, pf) = r.report.as_ref().map_or(
                (String::new(), String::new(), String::new(), String::new()),
                |m| {
                    (
                        format!("{:.6}", m.pressure.mae),
                        format!("{:.6}", m.distance_mae_km),
                        format!("{:.6}", m.distance_terminal_km),
                        m.parse_failure_count.to_string(),
                    )
                },
            );
            out.push_str(&format!(
                "\"{}\",{},\"{}\",{p},{d},{dt},{pf},{},{:.1}\n",
                r.cell.replace('"', "\"\""),
                r.seed,
                status.replace('"', "\"\""),
                r.final_loss.map_or(String::new(), |l| format!("{l:.6}")),
                r.seconds,
            ));
        }
        fs::write(path, out).map_err(|e| PipeError::io(path, e))
    }
}

/// Train and score one model per (cell, seed). Runs execute on the rayon
/// pool; results are merged in cell-major, seed-minor order. A failing run is
/// recorded and the rest continue.
pub fn run_ablation(exp: &Experiment, cells: &[Cell], seeds: &[u64]) -> Result<AblationTable> {
    if cells.is_empty() || seeds.is_empty() {
        return Err(PipeError::Config("ablation needs at least one cell and one seed".into()));
    }
    let started = Instant::now();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = &cells[c];
            let t = Instant::now();
            let cfg = ModelConfig {
                seed,
                ..cell.cfg.clone()
            };
            let tc = TrainConfig {
                seed,
                ..exp.train.clone()
            };
            let outcome = exp.run(cfg, &tc);
            let seconds = t.elapsed().as_secs_f64();
            match outcome {
                Ok((report, train)) => {
                    info!(
                        "{} seed {seed}: pressure MAE {:.3}, distance {:.1} km, {} parse failures ({seconds:.0}s)",
                        cell.name, report.pressure.mae, report.distance_mae_km, report.parse_failure_count
                    );
                    RunRecord {
                        cell: cell.name.clone(),
                        seed,
                        final_loss: train.loss_trace.last().copied(),
                        report: Some(report),
                        error: None,
                        seconds,
                    }
                }
                Err(e) => {
                    warn!("{} seed {seed} failed: {e}", cell.name);
                    RunRecord {
                        cell: cell.name.clone(),
                        seed,
                        report: None,
                        error: Some(e.to_string()),
                        final_loss: None,
                        seconds,
                    }
                }
            }
        })
        .collect();
    let summaries = cells
        .iter()
        .map(|cell| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == cell.name).collect();
            let reports: Vec<&MetricsReport> = mine.iter().filter_map(|r| r.report.as_ref()).collect();
            CellSummary {
                cell: cell.name.clone(),
                cfg: cell.cfg.clone(),
                runs_ok: reports.len(),
                runs_failed: mine.len() - reports.len(),
                median: median_summary(&reports),
            }
        })
        .collect();
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        runs,
        cells: summaries,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_count_is_product_of_cardinalities() {
        let base = ModelConfig::default();
        for axes in [
            vec![Axis::Scheme],
            vec![Axis::UseVision, Axis::Pe],
            vec![Axis::Scheme, Axis::Negate, Axis::Pe, Axis::UseVision],
        ] {
            let expect: usize = axes.iter().map(Axis::cardinality).product();
            let cells = grid_cells(&base, &axes);
            assert_eq!(cells.len(), expect);
            let mut names: Vec<_> = cells.iter().map(|c| c.name.clone()).collect();
            names.dedup();
            assert_eq!(names.len(), expect);
        }
        let cells = grid_cells(&base, &[Axis::Scheme]);
        assert_eq!(cells[0].cfg.scheme, Scheme::Sequential);
        assert_eq!(cells[2].name, "scheme=physics");
    }

    #[test]
    fn table_rows_flip_one_component() {
        let base = ModelConfig::default();
        let cells = table_cells(&base);
        let full = &cells.last().unwrap().cfg;
        assert!(full.use_vision && full.negate_vision_ids);
        assert_eq!((full.scheme, full.pe), (Scheme::Physics, PeMode::Variant));
        let neg = cells.iter().find(|c| c.name == "w/o negative indexing").unwrap();
        assert_eq!(
            neg.cfg,
            ModelConfig {
                negate_vision_ids: false,
                ..full.clone()
            }
        );
        for c in &cells[..cells.len() - 1] {
            let diffs = [
                c.cfg.use_vision != full.use_vision,
                c.cfg.scheme != full.scheme,
                c.cfg.negate_vision_ids != full.negate_vision_ids,
                c.cfg.pe != full.pe,
            ];
            assert_eq!(diffs.iter().filter(|&&d| d).count(), 1, "{}", c.name);
        }
    }

    #[test]
    fn axes_parse() {
        assert_eq!(parse_axes("scheme, pe").unwrap(), vec![Axis::Scheme, Axis::Pe]);
        assert!(parse_axes("scheme,scheme").is_err());
        assert!(parse_axes("colour").is_err());
        assert!(parse_axes("").is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
