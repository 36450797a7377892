//! Command-line front end. All numerics live in the library; this module
//! only loads configuration, calls into it and prints results.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use crate::config::{HrvFormat, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::report::{read_forecast_csv, render_table, write_forecast_csv, REPORT_FILE};
use crate::experiments::{
    generate_synthetic, mae, read_report_csv, run_grid, training_set, write_report_files, CloudMode, Dataset,
    ExperimentConfig, Horizon, SystemData,
};
use crate::geo::{timestamp_to_index, GeoPoint, TimeIndex};
use crate::gp::{fit_hyperparameters, GpModel, Inputs};
use crate::pipeline::power::{format_timestamp, parse_timestamp};
use crate::pipeline::{
    assemble, filter_systems, hrv_patch_mean, load_hrv, load_metadata, load_power, read_hrv_csv, save_hrv,
    write_metadata, write_power, AssembledSeries, FilterOutcome, HrvRasterStack, MetadataLoad, PowerData, PvSystem,
};

#[derive(Debug, Parser)]
#[command(name = "pvgp", version, about = "Gaussian-process PV power forecasting")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, filter and assemble the configured dataset and summarize it.
    Ingest,
    /// Write a synthetic dataset to the configured data paths.
    Synth,
    /// Fit hyperparameters for one system on the window before `--start`.
    Fit {
        #[arg(long)]
        system: i64,
        /// RFC 3339 timestamp or integer time index.
        #[arg(long)]
        start: String,
    },
    /// Forecast one system and write `time_index,timestamp_utc,mean_w,sd_w`.
    Forecast {
        #[arg(long)]
        system: i64,
        /// RFC 3339 timestamp or integer time index.
        #[arg(long)]
        start: String,
        #[arg(long, default_value = "4h")]
        horizon: Horizon,
        #[arg(long, default_value = "given")]
        cloud_mode: CloudMode,
        /// Output CSV; defaults to `<output_dir>/forecast_<system>_<start>.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the configured experiment grid and write report files.
    Experiment,
    /// Print the table for a report directory, `report.csv` or forecast CSV.
    Report { path: PathBuf },
}

/// Parse arguments, run, and return the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    if let Command::Report { path } = &cli.command {
        return cmd_report(path, out);
    }
    let cfg = load_config(&cli)?;
    let io = |e| Error::io("<stdout>", e);
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg, out)?,
        Command::Synth => cmd_synth(&cfg, out)?,
        Command::Fit { system, start } => cmd_fit(&cfg, system, &start, out)?,
        Command::Forecast {
            system,
            start,
            horizon,
            cloud_mode,
            output,
        } => cmd_forecast(&cfg, system, &start, horizon, cloud_mode, output, out)?,
        Command::Experiment => cmd_experiment(&cfg, out)?,
        Command::Report { .. } => unreachable!("handled above"),
    }
    let p = cfg.write_effective()?;
    writeln!(out, "effective config: {}", p.display()).map_err(io)
}

/// Loaded, filtered and HRV-joined inputs.
pub struct Loaded {
    pub metadata: MetadataLoad,
    pub power: PowerData,
    pub filter: FilterOutcome,
    pub dataset: Dataset,
}

fn load_stack(cfg: &RunConfig, path: &Path, epoch: DateTime<Utc>) -> Result<HrvRasterStack> {
    match cfg.data.hrv_format {
        HrvFormat::Binary => load_hrv(path, epoch),
        HrvFormat::Csv => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            let geometry = cfg.data.hrv_geometry.expect("validated");
            read_hrv_csv(BufReader::new(f), &path.display().to_string(), geometry, epoch)
        }
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Loaded> {
    let metadata = load_metadata(&cfg.data.metadata, &cfg.projection)?;
    let power = load_power(&cfg.data.power)?;
    let filter = filter_systems(&metadata, &power, &cfg.boundary, &cfg.filter);
    let mut stacks: BTreeMap<PathBuf, Arc<HrvRasterStack>> = BTreeMap::new();
    let mut systems = Vec::new();
    for s in &filter.kept {
        let path = cfg.data.hrv_path(s.system_id);
        let stack = match stacks.get(&path) {
            Some(st) => st.clone(),
            None => {
                let st = Arc::new(load_stack(cfg, &path, power.epoch)?);
                stacks.insert(path, st.clone());
                st
            }
        };
        systems.push(SystemData {
            system: s.clone(),
            power: power.get(s.system_id).cloned().unwrap_or_default(),
            stack,
        });
    }
    let dataset = Dataset {
        epoch: power.epoch,
        systems,
        sensor_max: cfg.data.sensor_max,
    };
    Ok(Loaded {
        metadata,
        power,
        filter,
        dataset,
    })
}

fn full_series(data: &Dataset, sd: &SystemData, patch: usize) -> Result<AssembledSeries> {
    let first = *sd.power.keys().next().expect("kept systems have power");
    let last = *sd.power.keys().next_back().expect("kept systems have power");
    assemble(&sd.system, &sd.power, data.epoch, &sd.stack, patch, data.sensor_max, (first, last.offset(1)))
}

fn cmd_ingest<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let l = load_dataset(cfg)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(
        out,
        "metadata: {} systems, {} rows skipped",
        l.metadata.systems.len(),
        l.metadata.skipped.len()
    )
    .map_err(io)?;
    for s in &l.metadata.skipped {
        writeln!(out, "  skipped line {}: {}", s.line, s.reason).map_err(io)?;
    }
    writeln!(
        out,
        "power: {} series, epoch {}",
        l.power.series.len(),
        format_timestamp(l.power.epoch)
    )
    .map_err(io)?;
    writeln!(out, "kept: {}", l.filter.kept.len()).map_err(io)?;
    writeln!(out, "removed: {}", l.filter.removed.len()).map_err(io)?;
    for r in &l.filter.removed {
        writeln!(out, "  system {}: {} ({})", r.system_id, r.reason, r.detail).map_err(io)?;
    }
    if !l.filter.orphan_power_ids.is_empty() {
        writeln!(out, "power series without metadata: {:?}", l.filter.orphan_power_ids).map_err(io)?;
    }
    for sd in &l.dataset.systems {
        let s = full_series(&l.dataset, sd, cfg.model.patch_px)?;
        writeln!(
            out,
            "system {}: {} rows, {} gaps ({}x{} px patch)",
            s.system_id(),
            s.len(),
            s.gaps,
            s.patch_px,
            s.patch_px
        )
        .map_err(io)?;
    }
    Ok(())
}

fn cmd_synth<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let sc = &cfg.synth;
    if sc.systems.len() > 1 && !cfg.data.hrv.contains("{id}") {
        return Err(Error::Config("data.hrv needs an `{id}` placeholder for several synthetic systems".into()));
    }
    if cfg.data.hrv_format != HrvFormat::Binary {
        return Err(Error::Config("synth writes binary HRV stacks only".into()));
    }
    let epoch = sc.epoch()?;
    let mut systems = Vec::new();
    let mut power = PowerData {
        epoch,
        series: BTreeMap::new(),
    };
    for s in &sc.systems {
        let system = PvSystem {
            system_id: s.system_id,
            location: GeoPoint::new(s.latitude, s.longitude, &cfg.projection)?,
            capacity_w: s.capacity_w,
            provenance: "synth".into(),
        };
        let seed = cfg.seed ^ (s.system_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let d = generate_synthetic(sc.scenario, sc.days, &system, epoch, seed, &sc.params)?;
        let path = cfg.data.hrv_path(s.system_id);
        ensure_parent(&path)?;
        save_hrv(&path, &d.stack, epoch)?;
        power.series.insert(s.system_id, d.power);
        systems.push(system);
    }
    ensure_parent(&cfg.data.metadata)?;
    write_metadata(&cfg.data.metadata, &systems)?;
    ensure_parent(&cfg.data.power)?;
    write_power(&cfg.data.power, &power)?;
    writeln!(
        out,
        "wrote {} {} systems x {} days to {}",
        systems.len(),
        sc.scenario,
        sc.days,
        cfg.data.metadata.parent().unwrap_or(Path::new(".")).display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn parse_start(s: &str, epoch: DateTime<Utc>) -> Result<TimeIndex> {
    if let Ok(i) = s.parse::<i64>() {
        return Ok(TimeIndex(i));
    }
    let t = parse_timestamp(s).ok_or_else(|| Error::InvalidInput(format!("bad --start `{s}`")))?;
    timestamp_to_index(t, epoch)
}

fn model_config(cfg: &RunConfig, system: i64, start: TimeIndex, horizon: Horizon, mode: CloudMode) -> Result<ExperimentConfig> {
    let c = ExperimentConfig {
        training_days: cfg.model.training_days,
        patch_px: cfg.model.patch_px,
        kernel: cfg.model_kernel()?,
        horizon,
        cloud_mode: mode,
        forecast_start: start,
        test_days: 1,
        system_ids: vec![system],
    };
    c.validate()?;
    Ok(c)
}

fn system_series(l: &Loaded, cfg: &RunConfig, system: i64) -> Result<(AssembledSeries, SystemData)> {
    let sd = l.dataset.system(system).cloned().ok_or_else(|| {
        let why = l
            .filter
            .removed
            .iter()
            .find(|r| r.system_id == system)
            .map_or("unknown system".to_string(), |r| format!("removed: {}", r.reason));
        Error::InvalidInput(format!("system {system}: {why}"))
    })?;
    Ok((full_series(&l.dataset, &sd, cfg.model.patch_px)?, sd))
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn cmd_fit<W: Write>(cfg: &RunConfig, system: i64, start: &str, out: &mut W) -> Result<()> {
    let l = load_dataset(cfg)?;
    let start = parse_start(start, l.dataset.epoch)?;
    let mc = model_config(cfg, system, start, Horizon::Hours4, CloudMode::Given)?;
    let (series, _) = system_series(&l, cfg, system)?;
    let train = training_set(&series, &mc, start, &cfg.forecast)?;
    let template = mc.kernel.conformed_to(2)?;
    let fit = pool(cfg)?.install(|| fit_hyperparameters(&train, &template, &cfg.forecast.fit_options(cfg.seed)))?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "training rows: {}", train.len()).map_err(io)?;
    writeln!(out, "kernel: {}", fit.spec).map_err(io)?;
    writeln!(out, "log_likelihood: {:.6}", fit.log_likelihood).map_err(io)?;
    writeln!(out, "best restart: {}", fit.best_restart).map_err(io)
}

fn cmd_forecast<W: Write>(
    cfg: &RunConfig,
    system: i64,
    start: &str,
    horizon: Horizon,
    mode: CloudMode,
    output: Option<PathBuf>,
    out: &mut W,
) -> Result<()> {
    let l = load_dataset(cfg)?;
    let start = parse_start(start, l.dataset.epoch)?;
    let mc = model_config(cfg, system, start, horizon, mode)?;
    let (series, sd) = system_series(&l, cfg, system)?;
    let train = training_set(&series, &mc, start, &cfg.forecast)?;
    let last_hrv = series
        .window(TimeIndex(i64::MIN), start)
        .last()
        .map(|r| r.hrv)
        .expect("training set is non-empty");

    let times: Vec<TimeIndex> = (0..horizon.steps() as i64).map(|k| start.offset(k)).collect();
    let mut rows = Vec::with_capacity(times.len());
    for &t in &times {
        let hrv = match mode {
            CloudMode::Given => hrv_patch_mean(&sd.stack, &sd.system, mc.patch_px, t, l.dataset.sensor_max)?,
            CloudMode::Persistence => last_hrv,
        };
        rows.push([t.value() as f64, hrv]);
    }
    let query = Inputs::from_rows(&rows)?;
    let template = mc.kernel.conformed_to(2)?;
    let fit = pool(cfg)?.install(|| fit_hyperparameters(&train, &template, &cfg.forecast.fit_options(cfg.seed)))?;
    let model = GpModel::new(train, &fit.spec)?;
    let pred = model.predict(&query)?;
    let cap = sd.system.capacity_w;
    let mean: Vec<f64> = pred.mean.iter().map(|m| m.clamp(0.0, cap)).collect();

    let path = output.unwrap_or_else(|| cfg.output_dir.join(format!("forecast_{system}_{start}.csv")));
    ensure_parent(&path)?;
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    write_forecast_csv(&mut w, &times, l.dataset.epoch, &mean, &pred).map_err(|e| Error::parse(&path, e.to_string()))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "kernel: {}", fit.spec).map_err(io)?;
    let truth: Option<Vec<f64>> = times.iter().map(|t| series.row_at(*t).map(|r| r.power_w)).collect();
    if let Some(truth) = truth {
        writeln!(out, "mae_w: {:.6}", mae(&truth, &mean)?).map_err(io)?;
    }
    writeln!(out, "wrote {} rows to {}", times.len(), path.display()).map_err(io)
}

fn cmd_experiment<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let l = load_dataset(cfg)?;
    let ids: Vec<i64> = if cfg.experiment.system_ids.is_empty() {
        l.dataset.systems.iter().map(|s| s.system.system_id).collect()
    } else {
        cfg.experiment.system_ids.clone()
    };
    if ids.is_empty() {
        return Err(Error::Config("no systems to run after filtering".into()));
    }
    let configs = cfg.experiment.build(&ids)?;
    let report = run_grid(&configs, &l.dataset, cfg.seed, &cfg.forecast, cfg.jobs)?;
    write_report_files(&cfg.output_dir, &report)?;
    let io = |e| Error::io("<stdout>", e);
    write!(out, "{}", render_table(&report)).map_err(io)?;
    writeln!(
        out,
        "{} rows, {} failed cells; reports in {}",
        report.rows.len(),
        report.failed_cells(),
        cfg.output_dir.display()
    )
    .map_err(io)
}

fn cmd_report<W: Write>(path: &Path, out: &mut W) -> Result<()> {
    let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let mut text = String::new();
    File::open(&file)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(&file, e))?;
    let source = file.display().to_string();
    let io = |e| Error::io("<stdout>", e);
    if text.starts_with("time_index,") {
        let rows = read_forecast_csv(text.as_bytes(), &source)?;
        let (first, last) = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::parse(&file, "empty forecast")),
        };
        let total: f64 = rows.iter().map(|r| r.mean_w).sum();
        writeln!(
            out,
            "forecast: {} steps from {} to {}, mean {:.2} W, max sd {:.2} W",
            rows.len(),
            format_timestamp(first.timestamp),
            format_timestamp(last.timestamp),
            total / rows.len() as f64,
            rows.iter().map(|r| r.sd_w).fold(0.0, f64::max)
        )
        .map_err(io)
    } else {
        let report = read_report_csv(text.as_bytes(), &source)?;
        write!(out, "{}", render_table(&report)).map_err(io)
    }
}
