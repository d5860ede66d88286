//! Forecast scoring, regression dumps and the ablation runner.

pub mod ablation;
pub mod metrics;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ForecastInstance, Series, Split};
use crate::error::{PipeError, Result};
use crate::geo::ImageSpec;
use crate::model::generate::{forecast, system_prefix, Forecast, PrefixCache, DEFAULT_MAX_NEW};
use crate::model::{train, Forecaster, ModelConfig, TrainConfig, TrainReport};

pub use ablation::{grid_cells, parse_axes, run_ablation, table_cells, AblationTable, Axis, Cell};
pub use metrics::{evaluate, great_circle_km, mae, regression_dump, rmse, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Generation budget per forecast, in characters.
    pub max_new: usize,
    /// Keep every `test_stride`-th test window.
    pub test_stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_new: DEFAULT_MAX_NEW,
            test_stride: 1,
        }
    }
}

/// Greedy forecasts for every window, reusing one cached system prompt.
pub fn forecast_windows(model: &Forecaster, windows: &[ForecastInstance], max_new: usize) -> Result<Vec<Forecast>> {
    let mut prefix: Option<PrefixCache> = None;
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        let stale = prefix.as_ref().map_or(true, |p| {
            p.len() != crate::data::prompt::system_prompt(w.history.len(), w.horizon()).chars().count()
        });
        if stale {
            prefix = Some(system_prefix(model, w)?);
        }
        out.push(forecast(model, w, max_new, prefix.as_ref())?);
    }
    Ok(out)
}

/// Parsed forecasts (`None` where the output was unusable) and truths.
pub fn score(forecasts: &[Forecast], windows: &[ForecastInstance]) -> Result<MetricsReport> {
    let horizon = windows
        .first()
        .map(ForecastInstance::horizon)
        .ok_or_else(|| PipeError::Data("no windows to score".into()))?;
    let (preds, truths) = pairs(forecasts, windows);
    evaluate(&preds, &truths, horizon)
}

pub fn pairs(forecasts: &[Forecast], windows: &[ForecastInstance]) -> (Vec<Option<Series>>, Vec<Series>) {
    let preds = forecasts.iter().map(|f| f.parsed.as_ref().ok().cloned()).collect();
    let truths = windows.iter().map(|w| Series::from_records(&w.label)).collect();
    (preds, truths)
}

/// Train and test windows of a split dataset plus the settings shared by
/// every run trained on them.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ImageSpec,
    pub train_windows: Vec<ForecastInstance>,
    pub test_windows: Vec<ForecastInstance>,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Experiment {
    pub fn new(
        dataset: &Dataset,
        split: &Split,
        history: usize,
        horizon: usize,
        train: TrainConfig,
        eval: EvalOptions,
    ) -> Result<Self> {
        if eval.test_stride == 0 {
            return Err(PipeError::Config("test stride must be positive".into()));
        }
        let train_windows = dataset.windows(&split.train, history, horizon)?;
        let test_windows: Vec<_> = dataset
            .windows(&split.test, history, horizon)?
            .into_iter()
            .step_by(eval.test_stride)
            .collect();
        if train_windows.is_empty() || test_windows.is_empty() {
            return Err(PipeError::Data(format!(
                "split yields {} train and {} test windows; tracks must hold at least {} records",
                train_windows.len(),
                test_windows.len(),
                history + horizon
            )));
        }
        info!(
            "{} train windows, {} test windows",
            train_windows.len(),
            test_windows.len()
        );
        Ok(Self {
            spec: dataset.spec,
            train_windows,
            test_windows,
            train,
            eval,
        })
    }

    /// Train one model and score it on the test windows.
    pub fn run(&self, cfg: ModelConfig, tc: &TrainConfig) -> Result<(MetricsReport, TrainReport)> {
        if cfg.image != self.spec {
            return Err(PipeError::Config(
                "model image geometry differs from the dataset's".into(),
            ));
        }
        let (model, report) = train(cfg, &self.train_windows, tc)?;
        let forecasts = forecast_windows(&model, &self.test_windows, self.eval.max_new)?;
        Ok((score(&forecasts, &self.test_windows)?, report))
    }
}
