//! Forecast protocols, configuration grids, reports and synthetic data.

pub mod grid;
pub mod report;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{index_to_timestamp, solar_elevation, TimeIndex, STEPS_PER_DAY};
use crate::gp::{fit_hyperparameters, FitOptions, GpModel, Inputs, PosteriorPrediction, TrainingSet};
use crate::kernels::KernelSpec;
use crate::pipeline::{rows_to_inputs, rows_to_training_set, AssembledSeries};

pub use grid::{run_grid, set_one_grid, set_two_grid, Dataset, SystemData};
pub use report::{
    export_boxplot_data, read_report_csv, write_report_files, BoxStats, DaySample, ExperimentReport, GroupBy,
    ReportRow, SystemCell,
};
pub use synthetic::{generate_synthetic, Scenario, SynthParams, SyntheticData};

pub const TRAINING_DAYS: [u32; 4] = [7, 14, 21, 30];
pub const PATCH_SIZES: [usize; 3] = [2, 6, 12];

/// Mean absolute error in the units of the inputs.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "MAE length mismatch: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("MAE of empty series".into()));
    }
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(sum / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Horizon {
    #[serde(rename = "48h")]
    Hours48,
    #[serde(rename = "4h")]
    Hours4,
}

impl Horizon {
    pub fn steps(self) -> usize {
        match self {
            Horizon::Hours48 => 576,
            Horizon::Hours4 => 48,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Horizon::Hours48 => "48h",
            Horizon::Hours4 => "4h",
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Horizon {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "48h" => Ok(Horizon::Hours48),
            "4h" => Ok(Horizon::Hours4),
            _ => Err(Error::InvalidInput(format!("unknown horizon `{s}` (expected 48h or 4h)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudMode {
    /// Future HRV values are known.
    Given,
    /// Every future step reuses the last observed HRV value.
    Persistence,
}

impl CloudMode {
    pub fn label(self) -> &'static str {
        match self {
            CloudMode::Given => "given",
            CloudMode::Persistence => "persistence",
        }
    }
}

impl fmt::Display for CloudMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CloudMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "given" => Ok(CloudMode::Given),
            "persistence" => Ok(CloudMode::Persistence),
            _ => Err(Error::InvalidInput(format!(
                "unknown cloud mode `{s}` (expected given or persistence)"
            ))),
        }
    }
}

/// One experiment setting. Forecasts launch at `forecast_start` and then
/// every 24 h after it, `test_days` times in total.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub training_days: u32,
    pub patch_px: usize,
    pub kernel: KernelSpec,
    pub horizon: Horizon,
    pub cloud_mode: CloudMode,
    pub forecast_start: TimeIndex,
    pub test_days: usize,
    pub system_ids: Vec<i64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !TRAINING_DAYS.contains(&self.training_days) {
            return Err(Error::Config(format!(
                "training_days {} not in {TRAINING_DAYS:?}",
                self.training_days
            )));
        }
        if !PATCH_SIZES.contains(&self.patch_px) {
            return Err(Error::Config(format!("patch_px {} not in {PATCH_SIZES:?}", self.patch_px)));
        }
        if self.horizon == Horizon::Hours48 && self.cloud_mode != CloudMode::Given {
            return Err(Error::Config("48h forecasts require cloud_mode = given".into()));
        }
        if self.test_days == 0 {
            return Err(Error::Config("test_days must be >= 1".into()));
        }
        if self.system_ids.is_empty() {
            return Err(Error::Config("no systems configured".into()));
        }
        self.kernel.validate()
    }

    pub fn training_steps(&self) -> i64 {
        i64::from(self.training_days) * STEPS_PER_DAY
    }

    /// Launch times, one per testing day.
    pub fn launches(&self) -> Vec<TimeIndex> {
        (0..self.test_days as i64)
            .map(|d| self.forecast_start.offset(d * STEPS_PER_DAY))
            .collect()
    }

    /// Short human-readable identity used in failure messages.
    pub fn describe(&self) -> String {
        format!(
            "{}d/{}px/{}/{}/{}",
            self.training_days,
            self.patch_px,
            self.kernel.display_name(),
            self.horizon,
            self.cloud_mode
        )
    }
}

/// Numerical knobs shared by every forecast in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastOptions {
    /// Training rows above this are thinned by a stride dividing one day.
    pub max_train_points: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Minimum fraction of the training window that must have data.
    pub min_training_coverage: f64,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions {
            max_train_points: 288,
            restarts: 3,
            max_iter: 200,
            tol: 1e-6,
            min_training_coverage: 0.5,
        }
    }
}

impl ForecastOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_train_points < 2 {
            return Err(Error::Config("max_train_points must be >= 2".into()));
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(Error::Config("restarts and max_iter must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_training_coverage) {
            return Err(Error::Config("min_training_coverage must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            restarts: self.restarts,
            seed,
            max_iter: self.max_iter,
            tol: self.tol,
            ..FitOptions::default()
        }
    }
}

/// Smallest stride that brings `n` rows to at most `max` while sampling
/// the same times of day on every day.
pub fn thinning_stride(n: usize, max: usize) -> usize {
    let need = n.div_ceil(max.max(1)).max(1);
    let day = STEPS_PER_DAY as usize;
    if need > day {
        return need.div_ceil(day) * day;
    }
    (need..=day).find(|s| day.is_multiple_of(*s)).unwrap_or(day)
}

/// Training rows `[start - days, start)`, thinned.
pub fn training_set(series: &AssembledSeries, cfg: &ExperimentConfig, start: TimeIndex, opts: &ForecastOptions) -> Result<TrainingSet> {
    let rows = series.window(start.offset(-cfg.training_steps()), start);
    let needed = (opts.min_training_coverage * cfg.training_steps() as f64).ceil() as usize;
    if rows.is_empty() || rows.len() < needed {
        return Err(Error::InsufficientCoverage(format!(
            "system {} has {} of {} training rows before t={start}",
            series.system_id(),
            rows.len(),
            cfg.training_steps()
        )));
    }
    let full = rows_to_training_set(rows)?;
    let stride = thinning_stride(full.len(), opts.max_train_points);
    if stride == 1 {
        Ok(full)
    } else {
        full.thinned(stride)
    }
}

/// Query rows `[t, hrv]` for the horizon starting at `start`, and the true
/// power at each step.
pub fn horizon_query(
    series: &AssembledSeries,
    horizon: Horizon,
    cloud_mode: CloudMode,
    start: TimeIndex,
) -> Result<(Inputs, Vec<f64>)> {
    let steps = horizon.steps();
    let rows = series.window(start, start.offset(steps as i64));
    if rows.len() != steps {
        return Err(Error::InsufficientCoverage(format!(
            "system {} has {} of {steps} horizon rows from t={start}",
            series.system_id(),
            rows.len()
        )));
    }
    let mut query = rows.to_vec();
    if cloud_mode == CloudMode::Persistence {
        let last = series
            .window(TimeIndex(i64::MIN), start)
            .last()
            .ok_or_else(|| Error::InsufficientCoverage(format!("no observation before t={start}")))?;
        for r in &mut query {
            r.hrv = last.hrv;
        }
    }
    Ok((rows_to_inputs(&query), rows.iter().map(|r| r.power_w).collect()))
}

/// A fitted model for one (system, launch) plus its training fit score.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: GpModel,
    pub log_likelihood: f64,
}

pub fn fit_for_launch(
    series: &AssembledSeries,
    cfg: &ExperimentConfig,
    start: TimeIndex,
    opts: &ForecastOptions,
    seed: u64,
) -> Result<FittedModel> {
    let train = training_set(series, cfg, start, opts)?;
    let template = cfg.kernel.conformed_to(2)?;
    let outcome = fit_hyperparameters(&train, &template, &opts.fit_options(seed))?;
    Ok(FittedModel {
        model: GpModel::new(train, &outcome.spec)?,
        log_likelihood: outcome.log_likelihood,
    })
}

#[derive(Debug, Clone)]
pub struct Forecast {
    pub system_id: i64,
    pub start: TimeIndex,
    pub query: Inputs,
    /// Raw posterior in watts.
    pub prediction: PosteriorPrediction,
    /// Posterior mean clamped to `[0, capacity]`.
    pub clamped_mean: Vec<f64>,
    pub actual: Vec<f64>,
    pub mae: f64,
    /// MAE over steps with the sun above the horizon, when there are any.
    pub daylight_mae: Option<f64>,
    pub fitted: KernelSpec,
}

/// Predict a horizon with an already fitted model.
pub fn predict_horizon(
    series: &AssembledSeries,
    fitted: &GpModel,
    horizon: Horizon,
    cloud_mode: CloudMode,
    start: TimeIndex,
) -> Result<Forecast> {
    let (query, actual) = horizon_query(series, horizon, cloud_mode, start)?;
    let prediction = fitted.predict(&query)?;
    let cap = series.capacity_w();
    let clamped_mean: Vec<f64> = prediction.mean.iter().map(|m| m.clamp(0.0, cap)).collect();
    let mae_all = mae(&actual, &clamped_mean)?;
    let (day_a, day_p): (Vec<f64>, Vec<f64>) = (0..query.len())
        .filter(|&k| {
            let t = index_to_timestamp(TimeIndex(query.row(k)[0] as i64), series.epoch);
            solar_elevation(&series.system.location, t) > 0.0
        })
        .map(|k| (actual[k], clamped_mean[k]))
        .unzip();
    Ok(Forecast {
        system_id: series.system_id(),
        start,
        query,
        prediction,
        clamped_mean,
        actual,
        mae: mae_all,
        daylight_mae: mae(&day_a, &day_p).ok(),
        fitted: fitted.spec().clone(),
    })
}

fn forecast(series: &AssembledSeries, cfg: &ExperimentConfig, opts: &ForecastOptions, seed: u64) -> Result<Forecast> {
    if series.patch_px != cfg.patch_px {
        return Err(Error::InvalidInput(format!(
            "series assembled with {} px patches, config wants {}",
            series.patch_px, cfg.patch_px
        )));
    }
    let start = cfg.forecast_start;
    // Check the horizon before paying for a fit.
    horizon_query(series, cfg.horizon, cfg.cloud_mode, start)?;
    let fitted = fit_for_launch(series, cfg, start, opts, seed)
        .map_err(|e| annotate(e, &format!("{} system {} t={start}", cfg.describe(), series.system_id())))?;
    predict_horizon(series, &fitted.model, cfg.horizon, cfg.cloud_mode, start)
}

pub(crate) fn annotate(e: Error, context: &str) -> Error {
    match e {
        Error::Fit(m) => Error::Fit(format!("{context}: {m}")),
        other => other,
    }
}

/// 48-hour forecast with known future cloud cover.
pub fn forecast_48h(series: &AssembledSeries, cfg: &ExperimentConfig, opts: &ForecastOptions, seed: u64) -> Result<Forecast> {
    if cfg.horizon != Horizon::Hours48 || cfg.cloud_mode != CloudMode::Given {
        return Err(Error::Config("forecast_48h needs horizon 48h and cloud_mode given".into()));
    }
    forecast(series, cfg, opts, seed)
}

/// 4-hour forecast with given or persisted cloud cover.
pub fn forecast_4h(series: &AssembledSeries, cfg: &ExperimentConfig, opts: &ForecastOptions, seed: u64) -> Result<Forecast> {
    if cfg.horizon != Horizon::Hours4 {
        return Err(Error::Config("forecast_4h needs horizon 4h".into()));
    }
    forecast(series, cfg, opts, seed)
}
