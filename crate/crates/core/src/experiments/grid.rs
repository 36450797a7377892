//! Configuration grids and the parallel grid runner.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{TimeIndex, STEPS_PER_DAY};
use crate::kernels::KernelSpec;
use crate::pipeline::{assemble, AssembledSeries, HrvRasterStack, PowerSeries, PvSystem};

use super::report::{DaySample, ExperimentReport, ReportRow, SystemCell};
use super::{fit_for_launch, predict_horizon, CloudMode, ExperimentConfig, FittedModel, ForecastOptions, Horizon};

/// Inputs for one system.
#[derive(Debug, Clone)]
pub struct SystemData {
    pub system: PvSystem,
    pub power: PowerSeries,
    pub stack: Arc<HrvRasterStack>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub epoch: DateTime<Utc>,
    pub systems: Vec<SystemData>,
    pub sensor_max: f64,
}

impl Dataset {
    pub fn system(&self, id: i64) -> Option<&SystemData> {
        self.systems.iter().find(|s| s.system.system_id == id)
    }
}

fn template(s: &str) -> KernelSpec {
    s.parse().expect("built-in kernel template parses")
}

pub const PERIODIC_MATERN12: &str = "periodic(matern12) + whitenoise()";
pub const PERIODIC_SE: &str = "periodic(se) + whitenoise()";
pub const PERIODIC_RQ: &str = "periodic(rq) + whitenoise()";

/// The ten 48-hour settings in the row order of the first results table:
/// training period sweep, patch sweep, then kernel sweep.
pub fn set_one_grid(system_ids: &[i64], first_test_day: i64, test_days: usize) -> Vec<ExperimentConfig> {
    let cfg = |days: u32, patch: usize, kernel: &str| ExperimentConfig {
        training_days: days,
        patch_px: patch,
        kernel: template(kernel),
        horizon: Horizon::Hours48,
        cloud_mode: CloudMode::Given,
        forecast_start: TimeIndex(first_test_day * STEPS_PER_DAY),
        test_days,
        system_ids: system_ids.to_vec(),
    };
    let mut out: Vec<ExperimentConfig> = [7, 14, 21, 30].iter().map(|&d| cfg(d, 2, PERIODIC_MATERN12)).collect();
    out.extend([2, 6, 12].iter().map(|&p| cfg(21, p, PERIODIC_MATERN12)));
    out.extend([PERIODIC_SE, PERIODIC_RQ, PERIODIC_MATERN12].iter().map(|k| cfg(21, 2, k)));
    out
}

/// The four 4-hour settings of the second results table: 6 and 12 px
/// patches, each with given and persisted cloud cover. Forecasts launch
/// `launch_step` steps after midnight.
pub fn set_two_grid(system_ids: &[i64], first_test_day: i64, test_days: usize, launch_step: i64) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for mode in [CloudMode::Given, CloudMode::Persistence] {
        for patch in [6, 12] {
            out.push(ExperimentConfig {
                training_days: 21,
                patch_px: patch,
                kernel: template(PERIODIC_MATERN12),
                horizon: Horizon::Hours4,
                cloud_mode: mode,
                forecast_start: TimeIndex(first_test_day * STEPS_PER_DAY + launch_step),
                test_days,
                system_ids: system_ids.to_vec(),
            });
        }
    }
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Everything that determines a fit. Settings that differ only in horizon
/// or cloud mode share one fit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct FitKey {
    system_id: i64,
    training_days: u32,
    patch_px: usize,
    kernel: String,
    start: TimeIndex,
}

impl FitKey {
    fn seed(&self, base: u64) -> u64 {
        [
            self.system_id as u64,
            u64::from(self.training_days),
            self.patch_px as u64,
            fnv1a(&self.kernel),
            self.start.value() as u64,
        ]
        .iter()
        .fold(splitmix64(base), |h, &v| splitmix64(h ^ v))
    }
}

/// Run every (setting, system, launch) forecast and collect MAEs. Cell
/// failures are recorded in the report; the only error is an empty grid
/// or a thread-pool failure. `jobs == 0` uses all cores.
pub fn run_grid(
    configs: &[ExperimentConfig],
    data: &Dataset,
    seed: u64,
    opts: &ForecastOptions,
    jobs: usize,
) -> Result<ExperimentReport> {
    if configs.is_empty() {
        return Err(Error::Config("experiment grid is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_grid_inner(configs, data, seed, opts))
}

fn run_grid_inner(configs: &[ExperimentConfig], data: &Dataset, seed: u64, opts: &ForecastOptions) -> Result<ExperimentReport> {
    let valid: Vec<std::result::Result<(), String>> = configs
        .iter()
        .map(|c| c.validate().and_then(|_| opts.validate()).map_err(|e| e.to_string()))
        .collect();

    // Assemble each (system, patch) series once over the whole power span.
    let mut series_keys: Vec<(i64, usize)> = configs
        .iter()
        .zip(&valid)
        .filter(|(_, v)| v.is_ok())
        .flat_map(|(c, _)| c.system_ids.iter().map(move |&s| (s, c.patch_px)))
        .collect();
    series_keys.sort_unstable();
    series_keys.dedup();
    let series: BTreeMap<(i64, usize), std::result::Result<AssembledSeries, String>> = series_keys
        .par_iter()
        .map(|&(id, patch)| {
            let r = (|| {
                let sd = data
                    .system(id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown system {id}")))?;
                let (first, last) = match (sd.power.keys().next(), sd.power.keys().next_back()) {
                    (Some(a), Some(b)) => (*a, *b),
                    _ => return Err(Error::InvalidInput(format!("system {id} has no power data"))),
                };
                assemble(&sd.system, &sd.power, data.epoch, &sd.stack, patch, data.sensor_max, (first, last.offset(1)))
            })();
            ((id, patch), r.map_err(|e| e.to_string()))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    // One fit per (system, training window, patch, kernel, launch).
    let mut fit_keys: Vec<FitKey> = Vec::new();
    for (c, v) in configs.iter().zip(&valid) {
        if v.is_err() {
            continue;
        }
        for &s in &c.system_ids {
            if !matches!(series.get(&(s, c.patch_px)), Some(Ok(_))) {
                continue;
            }
            for start in c.launches() {
                fit_keys.push(FitKey {
                    system_id: s,
                    training_days: c.training_days,
                    patch_px: c.patch_px,
                    kernel: c.kernel.to_string(),
                    start,
                });
            }
        }
    }
    fit_keys.sort();
    fit_keys.dedup();
    let fits: BTreeMap<FitKey, std::result::Result<FittedModel, String>> = fit_keys
        .into_par_iter()
        .map(|k| {
            let sr = series[&(k.system_id, k.patch_px)].as_ref().expect("filtered above");
            let cfg = configs
                .iter()
                .find(|c| c.training_days == k.training_days && c.patch_px == k.patch_px && c.kernel.to_string() == k.kernel)
                .expect("key built from a config");
            let r = fit_for_launch(sr, cfg, k.start, opts, k.seed(seed))
                .map_err(|e| format!("{} system {} t={}: {e}", cfg.describe(), k.system_id, k.start));
            (k, r)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    // Predict every (config, system, launch).
    struct Job<'a> {
        row: usize,
        cfg: &'a ExperimentConfig,
        system_id: i64,
        start: TimeIndex,
    }
    let mut jobs = Vec::new();
    for (row, c) in configs.iter().enumerate() {
        for &s in &c.system_ids {
            for start in c.launches() {
                jobs.push(Job {
                    row,
                    cfg: c,
                    system_id: s,
                    start,
                });
            }
        }
    }
    let outcomes: Vec<std::result::Result<(f64, Option<f64>), String>> = jobs
        .par_iter()
        .map(|j| {
            valid[j.row].clone()?;
            let sr = series[&(j.system_id, j.cfg.patch_px)].as_ref().map_err(Clone::clone)?;
            let key = FitKey {
                system_id: j.system_id,
                training_days: j.cfg.training_days,
                patch_px: j.cfg.patch_px,
                kernel: j.cfg.kernel.to_string(),
                start: j.start,
            };
            let fitted = fits[&key].as_ref().map_err(Clone::clone)?;
            let f = predict_horizon(sr, &fitted.model, j.cfg.horizon, j.cfg.cloud_mode, j.start)
                .map_err(|e| format!("{} system {} t={}: {e}", j.cfg.describe(), j.system_id, j.start))?;
            Ok((f.mae, f.daylight_mae))
        })
        .collect();

    let mut report = ExperimentReport::default();
    let mut k = 0;
    for (row, c) in configs.iter().enumerate() {
        let mut r = ReportRow::for_config(row, c);
        for &s in &c.system_ids {
            let n = c.launches().len();
            let mut failure = None;
            let (mut maes, mut day_maes) = (Vec::new(), Vec::new());
            for (j, o) in jobs[k..k + n].iter().zip(&outcomes[k..k + n]) {
                match o {
                    Ok((m, d)) => {
                        maes.push(*m);
                        if let Some(d) = d {
                            day_maes.push(*d);
                        }
                        report.samples.push(DaySample {
                            row,
                            system_id: s,
                            day: j.start.value().div_euclid(STEPS_PER_DAY),
                            forecast_start: j.start,
                            mae_w: *m,
                            daylight_mae_w: *d,
                        });
                    }
                    Err(e) if failure.is_none() => failure = Some(e.clone()),
                    Err(_) => {}
                }
            }
            k += n;
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            r.systems.push(match failure {
                Some(f) => SystemCell {
                    system_id: s,
                    mae_w: None,
                    daylight_mae_w: None,
                    failure: Some(f),
                },
                None => SystemCell {
                    system_id: s,
                    mae_w: mean(&maes),
                    daylight_mae_w: if day_maes.len() == maes.len() { mean(&day_maes) } else { None },
                    failure: None,
                },
            });
        }
        report.rows.push(r);
    }
    Ok(report)
}
