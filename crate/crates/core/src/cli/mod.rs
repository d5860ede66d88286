//! Command-line front end: argument definitions and the subcommands.

pub mod config;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::prompt::{label_text, IMAGE_TAG};
use crate::data::{build_prompt, split_dataset, Dataset, ForecastInstance, Series, Split, DEFAULT_RATIOS};
use crate::encoding::{build_pe_matrix, standard_pe_matrix};
use crate::error::{PipeError, Result};
use crate::eval::{self, grid_cells, parse_axes, run_ablation, table_cells, Experiment};
use crate::indexing::{build_grid, Scheme, TokenKind, TokenLayout};
use crate::model::checkpoint;
use crate::model::{train, ModelInput, PeMode};

pub use config::{RunConfig, OUT_DIR_ENV, RESOLVED_CONFIG};

pub const SPLIT_FILE: &str = "split.json";
pub const FORECASTS_FILE: &str = "forecasts.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Parser)]
#[command(name = "pipe", version, about = "Physics-informed positional encoding for cyclone track forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate tracks, render their images and write a fixed split.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tracks: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Write the position grid and positional-embedding matrix of one window.
    EncodeDump {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Window index over all sequences in file order.
        #[arg(long, default_value_t = 0)]
        instance: usize,
        /// Drop the images and lay the prompt out as plain text.
        #[arg(long)]
        text_only: bool,
    },
    /// Train a forecaster on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Generate forecasts for every window of a split.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Emit the ground truth instead of running a model.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score a forecasts file against the dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        forecasts: Option<PathBuf>,
    },
    /// Train and score one model per configuration cell and seed.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        eval: EvalFlags,
        /// Comma-separated subset of use_vision, scheme, negate, pe. Without
        /// it the published ablation rows are run.
        #[arg(long)]
        axes: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (defaults to $PIPE_OUT_DIR, then the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub pe: Option<PeMode>,
    #[arg(long)]
    pub use_vision: Option<bool>,
    #[arg(long)]
    pub negate: Option<bool>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Seeds both initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long)]
    pub max_new: Option<usize>,
    #[arg(long)]
    pub test_stride: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.paths.data_dir = d.clone();
        }
        if let Some(o) = &self.out {
            cfg.paths.out_dir = o.clone();
        } else if let Some(o) = std::env::var_os(OUT_DIR_ENV) {
            cfg.paths.out_dir = PathBuf::from(o);
        }
        set(&mut cfg.history, self.history);
        set(&mut cfg.horizon, self.horizon);
        Ok(cfg)
    }
}

fn set<T: Clone>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl ModelFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        set(&mut m.scheme, self.scheme);
        set(&mut m.pe, self.pe);
        set(&mut m.use_vision, self.use_vision);
        set(&mut m.negate_vision_ids, self.negate);
        set(&mut m.d_model, self.d_model);
        set(&mut m.n_layers, self.layers);
        set(&mut m.n_heads, self.heads);
        cfg.sync_rope();
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.model.seed = s;
            cfg.train.seed = s;
        }
        set(&mut cfg.train.epochs, self.epochs);
        if self.steps.is_some() {
            cfg.train.max_steps = self.steps;
        }
        set(&mut cfg.train.lr, self.lr);
        set(&mut cfg.train.batch_size, self.batch);
    }
}

impl EvalFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.eval.max_new, self.max_new);
        set(&mut cfg.eval.test_stride, self.test_stride);
    }
}

/// Short machine-readable name of an error's category.
pub fn error_kind(e: &PipeError) -> &'static str {
    match e {
        PipeError::Config(_) => "config",
        PipeError::Vocabulary { .. } => "vocabulary",
        PipeError::Divergence(_) => "divergence",
        PipeError::Io { .. } => "io",
        PipeError::Parse(_) => "parse",
        PipeError::Shape(_) => "shape",
        _ => "data",
    }
}

/// One-line JSON diagnostic for stderr.
pub fn diagnostic(e: &PipeError) -> String {
    serde_json::json!({
        "error": error_kind(e),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    })
    .to_string()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            common,
            seed,
            tracks,
            length,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = seed {
                cfg.data.sim.seed = s;
                cfg.data.split_seed = s;
            }
            set(&mut cfg.data.tracks, tracks);
            set(&mut cfg.data.length, length);
            if common.out.is_some() || std::env::var_os(OUT_DIR_ENV).is_some() {
                cfg.paths.data_dir = cfg.paths.out_dir.clone();
            }
            gen_data(&cfg)
        }
        Command::EncodeDump {
            common,
            model,
            instance,
            text_only,
        } => {
            let mut cfg = common.resolve()?;
            model.apply(&mut cfg);
            encode_dump(&cfg, instance, text_only)
        }
        Command::Train { common, model, train } => {
            let mut cfg = common.resolve()?;
            model.apply(&mut cfg);
            train.apply(&mut cfg);
            train_cmd(&cfg)
        }
        Command::Forecast {
            common,
            eval,
            checkpoint,
            oracle,
            split,
        } => {
            let mut cfg = common.resolve()?;
            eval.apply(&mut cfg);
            if checkpoint.is_some() {
                cfg.paths.checkpoint = checkpoint;
            }
            forecast_cmd(&cfg, oracle, &split)
        }
        Command::Eval { common, forecasts } => {
            let mut cfg = common.resolve()?;
            if forecasts.is_some() {
                cfg.paths.forecasts = forecasts;
            }
            eval_cmd(&cfg)
        }
        Command::Ablate {
            common,
            model,
            train,
            eval,
            axes,
            seeds,
        } => {
            let mut cfg = common.resolve()?;
            model.apply(&mut cfg);
            train.apply(&mut cfg);
            eval.apply(&mut cfg);
            if let Some(a) = axes {
                cfg.ablation.axes = parse_axes(&a)?;
            }
            if let Some(s) = seeds {
                cfg.ablation.seeds = parse_seeds(&s)?;
            }
            ablate_cmd(&cfg)
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|e| PipeError::Config(format!("bad seed {p:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(PipeError::Config("no seeds given".into()));
    }
    Ok(seeds)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipeError::io(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| PipeError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| PipeError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Dataset and split from `paths.data_dir`; the model adopts the dataset's
/// image geometry.
fn load_data(cfg: &mut RunConfig) -> Result<(Dataset, Split)> {
    let dir = cfg.paths.data_dir.clone();
    let ds = Dataset::load(&dir)?;
    let split: Split = read_json(&dir.join(SPLIT_FILE))?;
    if cfg.model.image != ds.spec {
        info!("using the dataset's image geometry {:?}", ds.spec);
        cfg.model.image = ds.spec;
    }
    Ok((ds, split))
}

fn split_ids<'a>(split: &'a Split, name: &str) -> Result<&'a [String]> {
    match name {
        "train" => Ok(&split.train),
        "val" => Ok(&split.val),
        "test" => Ok(&split.test),
        other => Err(PipeError::Config(format!(
            "unknown split {other:?} (expected train, val or test)"
        ))),
    }
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let span = cfg.history + cfg.horizon;
    if cfg.data.length < span {
        return Err(PipeError::Config(format!(
            "--length {} is shorter than history + horizon = {span}",
            cfg.data.length
        )));
    }
    let ds = Dataset::synthesize(&cfg.data.sim, cfg.data.tracks, cfg.data.length, &cfg.model.image)?;
    let split = split_dataset(&ds.sequence_ids(), DEFAULT_RATIOS, cfg.data.split_seed)?;
    let dir = &cfg.paths.data_dir;
    create_dir(dir)?;
    ds.save(dir)?;
    write_json(&split, &dir.join(SPLIT_FILE))?;
    cfg.write_resolved(dir)?;
    info!(
        "wrote {} tracks to {} (split {}/{}/{})",
        ds.tracks.len(),
        dir.display(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn axis_name(a: usize) -> &'static str {
    ["temporal", "height", "width"][a]
}

pub fn encode_dump(cfg: &RunConfig, instance: usize, text_only: bool) -> Result<()> {
    let mut cfg = cfg.clone();
    let (ds, _) = load_data(&mut cfg)?;
    cfg.validate()?;
    let windows = ds.windows(&ds.sequence_ids(), cfg.history, cfg.horizon)?;
    let inst = windows.get(instance).ok_or_else(|| {
        PipeError::Config(format!("instance {instance} out of range ({} windows)", windows.len()))
    })?;
    let m = &cfg.model;
    let (layout, grid, pe) = if text_only {
        let (prompt, label) = build_prompt(inst)?;
        let n = prompt.replace(IMAGE_TAG, "").chars().count() + label.chars().count();
        let layout = TokenLayout::text_only(n);
        let grid = build_grid(&layout, &m.indexing())?;
        let pe = match m.pe {
            PeMode::None => None,
            PeMode::Standard => Some(standard_pe_matrix(&layout, m.d_model)?.values),
            PeMode::Variant => Some(build_pe_matrix(&layout, m.d_model, &m.wavelengths)?.values),
        };
        (layout, grid, pe)
    } else {
        let model = crate::model::Forecaster::new(m.clone())?;
        let input = ModelInput::training(m, &model.vocab, inst)?;
        (input.layout, input.grid, input.pe)
    };
    let out = &cfg.paths.out_dir;
    create_dir(out)?;

    let mut w = csv_writer(&out.join("positions.csv"))?;
    w.write_record(["axis", "index", "value"]).map_err(csv_err)?;
    for (a, values) in grid.axes.iter().enumerate() {
        for (i, v) in values.iter().enumerate() {
            w.write_record([axis_name(a), &i.to_string(), &v.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| PipeError::io(out, e))?;

    let mut w = csv_writer(&out.join("tokens.csv"))?;
    w.write_record(["index", "kind"]).map_err(csv_err)?;
    for (i, k) in layout.token_kinds().iter().enumerate() {
        let kind = match k {
            TokenKind::Text => "text",
            TokenKind::Vision => "vision",
        };
        w.write_record([i.to_string().as_str(), kind]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PipeError::io(out, e))?;

    match pe {
        Some(pe) => {
            let mut w = csv_writer(&out.join("pe.csv"))?;
            w.write_record(["row", "dim", "value"]).map_err(csv_err)?;
            for r in 0..pe.rows {
                for (d, v) in pe.row(r).iter().enumerate() {
                    w.write_record([r.to_string(), d.to_string(), v.to_string()])
                        .map_err(csv_err)?;
                }
            }
            w.flush().map_err(|e| PipeError::io(out, e))?;
        }
        None => info!("positional embedding disabled; pe.csv not written"),
    }
    cfg.write_resolved(out)?;
    info!("{} tokens ({} scheme) written to {}", grid.len(), m.scheme, out.display());
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| PipeError::Data(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> PipeError {
    PipeError::Data(format!("csv: {e}"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub param_count: usize,
    pub train_windows: usize,
    pub final_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub seconds: f64,
    pub loss_trace: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let (ds, split) = load_data(&mut cfg)?;
    cfg.validate()?;
    let t = std::time::Instant::now();
    let train_windows = ds.windows(&split.train, cfg.history, cfg.horizon)?;
    let (model, report) = train(cfg.model.clone(), &train_windows, &cfg.train)?;
    let val_windows: Vec<_> = ds
        .windows(&split.val, cfg.history, cfg.horizon)?
        .into_iter()
        .step_by(cfg.eval.test_stride)
        .collect();
    let val_loss = if val_windows.is_empty() {
        None
    } else {
        let mut sum = 0.0;
        for w in &val_windows {
            sum += model.loss(&ModelInput::training(&model.cfg, &model.vocab, w)?)?;
        }
        Some(sum / val_windows.len() as f64)
    };
    let out = cfg.paths.out_dir.clone();
    create_dir(&out)?;
    let ckpt = out.join("checkpoint.json");
    checkpoint::save(&model, &ckpt)?;
    let summary = TrainSummary {
        steps: report.steps,
        param_count: report.param_count,
        train_windows: train_windows.len(),
        final_loss: report.loss_trace.last().copied(),
        val_loss,
        seconds: t.elapsed().as_secs_f64(),
        loss_trace: report.loss_trace,
        epoch_losses: report.epoch_losses,
    };
    write_json(&summary, &out.join("train_report.json"))?;
    cfg.paths.checkpoint = Some(ckpt.clone());
    cfg.write_resolved(&out)?;
    info!(
        "{} steps, final loss {:.4}, validation loss {}; checkpoint {}",
        summary.steps,
        summary.final_loss.unwrap_or(f64::NAN),
        val_loss.map_or("n/a".into(), |v| format!("{v:.4}")),
        ckpt.display()
    );
    Ok(())
}

/// One line of `forecasts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub sequence_id: String,
    /// First history index of the window.
    pub start: usize,
    pub text: String,
    /// Whether generation reached the closing brace.
    pub closed: bool,
    pub forecast: Option<Series>,
    pub error: Option<String>,
}

pub fn forecast_cmd(cfg: &RunConfig, oracle: bool, split_name: &str) -> Result<()> {
    let mut cfg = cfg.clone();
    let (ds, split) = load_data(&mut cfg)?;
    let windows: Vec<ForecastInstance> = ds
        .windows(split_ids(&split, split_name)?, cfg.history, cfg.horizon)?
        .into_iter()
        .step_by(cfg.eval.test_stride.max(1))
        .collect();
    if windows.is_empty() {
        return Err(PipeError::Data(format!("the {split_name} split has no windows")));
    }
    let records: Vec<ForecastRecord> = if oracle {
        windows
            .iter()
            .map(|w| ForecastRecord {
                sequence_id: w.sequence_id.clone(),
                start: w.start,
                text: label_text(&w.label),
                closed: true,
                forecast: Some(Series::from_records(&w.label)),
                error: None,
            })
            .collect()
    } else {
        let path = cfg
            .paths
            .checkpoint
            .clone()
            .ok_or_else(|| PipeError::Config("forecast needs --checkpoint or --oracle".into()))?;
        let model = checkpoint::load(&path)?;
        if model.cfg.image != ds.spec {
            return Err(PipeError::Config(
                "checkpoint image geometry differs from the dataset's".into(),
            ));
        }
        cfg.model = model.cfg.clone();
        let forecasts = eval::forecast_windows(&model, &windows, cfg.eval.max_new)?;
        windows
            .iter()
            .zip(forecasts)
            .map(|(w, f)| ForecastRecord {
                sequence_id: w.sequence_id.clone(),
                start: w.start,
                text: f.generation.text,
                closed: f.generation.closed,
                error: f.parsed.as_ref().err().map(|e| e.to_string()),
                forecast: f.parsed.ok(),
            })
            .collect()
    };
    let out = cfg.paths.out_dir.clone();
    create_dir(&out)?;
    let path = out.join(FORECASTS_FILE);
    let mut file = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| PipeError::io(&path, e))?);
    for r in &records {
        writeln!(file, "{}", serde_json::to_string(r)?).map_err(|e| PipeError::io(&path, e))?;
    }
    file.flush().map_err(|e| PipeError::io(&path, e))?;
    let failed = records.iter().filter(|r| r.forecast.is_none()).count();
    if failed > 0 {
        warn!("{failed} of {} forecasts could not be parsed", records.len());
    }
    cfg.paths.forecasts = Some(path.clone());
    cfg.write_resolved(&out)?;
    info!("{} forecasts written to {}", records.len(), path.display());
    Ok(())
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    let file = fs::File::open(path).map_err(|e| PipeError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipeError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| PipeError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let (ds, _) = load_data(&mut cfg)?;
    let path = cfg
        .paths
        .forecasts
        .clone()
        .ok_or_else(|| PipeError::Config("eval needs --forecasts".into()))?;
    let records = read_forecasts(&path)?;
    let (h, f) = (cfg.history, cfg.horizon);
    let mut truths = Vec::with_capacity(records.len());
    for r in &records {
        let track = ds
            .tracks
            .iter()
            .find(|t| t.sequence_id == r.sequence_id)
            .ok_or_else(|| PipeError::Data(format!("unknown sequence {}", r.sequence_id)))?;
        let label = track.records.get(r.start + h..r.start + h + f).ok_or_else(|| {
            PipeError::Data(format!(
                "{} window at {} runs past the end of the track",
                r.sequence_id, r.start
            ))
        })?;
        truths.push(Series::from_records(label));
    }
    let preds: Vec<Option<Series>> = records.iter().map(|r| r.forecast.clone()).collect();
    let report = eval::evaluate(&preds, &truths, f)?;
    let out = cfg.paths.out_dir.clone();
    create_dir(&out)?;
    report.write_json(&out.join(METRICS_FILE))?;
    let rows = eval::regression_dump(&preds, &truths, f, &out.join("regression.csv"))?;
    cfg.write_resolved(&out)?;
    println!(
        "pressure MAE {:.3} hPa  RMSE {:.3}  distance {:.1} km (terminal {:.1} km)  parse failures {}/{}",
        report.pressure.mae,
        report.pressure.rmse,
        report.distance_mae_km,
        report.distance_terminal_km,
        report.parse_failure_count,
        report.n_forecasts
    );
    info!("{rows} regression rows written to {}", out.display());
    Ok(())
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let (ds, split) = load_data(&mut cfg)?;
    cfg.validate()?;
    let cells = if cfg.ablation.axes.is_empty() {
        table_cells(&cfg.model)
    } else {
        grid_cells(&cfg.model, &cfg.ablation.axes)
    };
    for c in &cells {
        c.cfg.validate()?;
    }
    let exp = Experiment::new(&ds, &split, cfg.history, cfg.horizon, cfg.train.clone(), cfg.eval)?;
    info!(
        "{} cells x {} seeds = {} runs",
        cells.len(),
        cfg.ablation.seeds.len(),
        cells.len() * cfg.ablation.seeds.len()
    );
    let table = run_ablation(&exp, &cells, &cfg.ablation.seeds)?;
    let out = cfg.paths.out_dir.clone();
    create_dir(&out)?;
    table.write_csv(&out.join("ablation.csv"))?;
    table.write_runs_csv(&out.join("ablation_runs.csv"))?;
    write_json(&table, &out.join("ablation.json"))?;
    cfg.write_resolved(&out)?;
    println!("{:<44} {:>8} {:>10} {:>8}", "model", "p MAE", "dist km", "failed");
    for c in &table.cells {
        match c.median {
            Some(m) => println!(
                "{:<44} {:>8.3} {:>10.1} {:>8}",
                c.cell, m.pressure_mae, m.distance_mae_km, c.runs_failed
            ),
            None => println!("{:<44} {:>8} {:>10} {:>8}", c.cell, "-", "-", c.runs_failed),
        }
    }
    Ok(())
}
