//! TOML run configuration.
//!
//! Every section is optional and unknown keys are rejected. Relative paths
//! resolve against the directory holding the config file. A run writes the
//! fully defaulted document back out as `effective_config.toml`.
//!
//! ```toml
//! seed = 7
//! jobs = 4
//! output_dir = "out"
//!
//! [data]
//! metadata = "metadata.csv"
//! power = "power.csv"
//! hrv = "hrv_{id}.hrv"        # `{id}` expands per system; omit it to share one stack
//! hrv_format = "binary"       # or "csv", which needs `hrv_geometry`
//! sensor_max = 1023.0
//!
//! [boundary]
//! kind = "box"
//! min_easting = 0.0
//! max_easting = 700000.0
//! min_northing = 0.0
//! max_northing = 1300000.0
//!
//! [experiment]
//! grid = "set-two"            # "set-one", "set-two" or "custom"
//! first_test_day = 21
//! test_days = 10
//! ```

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    set_one_grid, set_two_grid, CloudMode, ExperimentConfig, ForecastOptions, Horizon, Scenario, SynthParams,
};
use crate::geo::{Boundary, TimeIndex, TmParams, STEPS_PER_DAY};
use crate::kernels::KernelSpec;
use crate::pipeline::{NightThreshold, RasterGeometry, DEFAULT_SENSOR_MAX};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub projection: TmParams,
    pub boundary: Boundary,
    pub filter: NightThreshold,
    pub model: ModelConfig,
    pub forecast: ForecastOptions,
    pub experiment: GridConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            projection: TmParams::default(),
            boundary: Boundary::default(),
            filter: NightThreshold::default(),
            model: ModelConfig::default(),
            forecast: ForecastOptions::default(),
            experiment: GridConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrvFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub metadata: PathBuf,
    pub power: PathBuf,
    pub hrv: String,
    pub hrv_format: HrvFormat,
    pub hrv_geometry: Option<RasterGeometry>,
    pub sensor_max: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            metadata: PathBuf::from("metadata.csv"),
            power: PathBuf::from("power.csv"),
            hrv: "hrv_{id}.hrv".into(),
            hrv_format: HrvFormat::Binary,
            hrv_geometry: None,
            sensor_max: DEFAULT_SENSOR_MAX,
        }
    }
}

impl DataConfig {
    pub fn hrv_path(&self, system_id: i64) -> PathBuf {
        PathBuf::from(self.hrv.replace("{id}", &system_id.to_string()))
    }
}

/// Model used by the `fit` and `forecast` subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub training_days: u32,
    pub patch_px: usize,
    pub kernel: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            training_days: 21,
            patch_px: 12,
            kernel: "periodic(matern12) + whitenoise()".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    SetOne,
    SetTwo,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomCell {
    pub training_days: u32,
    pub patch_px: usize,
    pub kernel: String,
    pub horizon: Horizon,
    pub cloud_mode: CloudMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub grid: GridKind,
    /// Day number (since the data epoch) of the first forecast launch.
    pub first_test_day: i64,
    pub test_days: usize,
    /// Step of day at which 4-hour forecasts launch (120 = 10:00 UTC).
    pub launch_step_4h: i64,
    /// Systems to run; empty means every system that passes the filters.
    pub system_ids: Vec<i64>,
    pub cells: Vec<CustomCell>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            grid: GridKind::SetOne,
            first_test_day: 30,
            test_days: 1,
            launch_step_4h: 120,
            system_ids: Vec::new(),
            cells: Vec::new(),
        }
    }
}

impl GridConfig {
    /// Expand into experiment settings for `system_ids`.
    pub fn build(&self, system_ids: &[i64]) -> Result<Vec<ExperimentConfig>> {
        let configs = match self.grid {
            GridKind::SetOne => set_one_grid(system_ids, self.first_test_day, self.test_days),
            GridKind::SetTwo => set_two_grid(system_ids, self.first_test_day, self.test_days, self.launch_step_4h),
            GridKind::Custom => self
                .cells
                .iter()
                .map(|c| {
                    let start = self.first_test_day * STEPS_PER_DAY
                        + if c.horizon == Horizon::Hours4 { self.launch_step_4h } else { 0 };
                    Ok(ExperimentConfig {
                        training_days: c.training_days,
                        patch_px: c.patch_px,
                        kernel: c.kernel.parse::<KernelSpec>()?,
                        horizon: c.horizon,
                        cloud_mode: c.cloud_mode,
                        forecast_start: TimeIndex(start),
                        test_days: self.test_days,
                        system_ids: system_ids.to_vec(),
                    })
                })
                .collect::<Result<_>>()?,
        };
        if configs.is_empty() {
            return Err(Error::Config("experiment grid is empty".into()));
        }
        for c in &configs {
            c.validate()?;
        }
        Ok(configs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSystem {
    pub system_id: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub capacity_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub days: usize,
    /// First day of the generated data, `YYYY-MM-DD` (UTC).
    pub start_date: String,
    pub systems: Vec<SynthSystem>,
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Capacities of the four systems in the original study; the
        // locations are placeholders spread across England.
        let sys = |system_id, latitude, longitude, capacity_w| SynthSystem {
            system_id,
            latitude,
            longitude,
            capacity_w,
        };
        SynthConfig {
            scenario: Scenario::Scattered,
            days: 31,
            start_date: "2021-06-01".into(),
            systems: vec![
                sys(709, 51.45, -0.97, 2460.0),
                sys(1556, 52.63, -1.13, 3870.0),
                sys(1627, 50.72, -3.53, 2820.0),
                sys(1872, 53.80, -1.55, 3960.0),
            ],
            params: SynthParams::default(),
        }
    }
}

impl SynthConfig {
    pub fn epoch(&self) -> Result<DateTime<Utc>> {
        let d = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("synth.start_date `{}`: {e}", self.start_date)))?;
        Ok(d.and_time(NaiveTime::MIN).and_utc())
    }
}

impl RunConfig {
    /// Parse a config document; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.data.metadata);
        fix(&mut self.data.power);
        if Path::new(&self.data.hrv).is_relative() {
            self.data.hrv = base.join(&self.data.hrv).to_string_lossy().into_owned();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.boundary.validate()?;
        self.forecast.validate()?;
        self.synth.params.validate()?;
        self.synth.epoch()?;
        if !(self.data.sensor_max.is_finite() && self.data.sensor_max > 0.0) {
            return Err(Error::Config("data.sensor_max must be > 0".into()));
        }
        if self.data.hrv_format == HrvFormat::Csv && self.data.hrv_geometry.is_none() {
            return Err(Error::Config("data.hrv_format = \"csv\" needs data.hrv_geometry".into()));
        }
        self.model_kernel()?;
        if self.experiment.grid == GridKind::Custom && self.experiment.cells.is_empty() {
            return Err(Error::Config("experiment grid is empty".into()));
        }
        Ok(())
    }

    pub fn model_kernel(&self) -> Result<KernelSpec> {
        let k: KernelSpec = self.model.kernel.parse()?;
        k.validate()?;
        Ok(k)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write_effective(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let p = self.output_dir.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&p, self.to_toml()).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text, Path::new("")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 3\n", Path::new(".")).is_err());
        assert!(RunConfig::from_toml("[data]\nmetadta = \"x\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn paths_resolve_against_base() {
        let cfg = RunConfig::from_toml("[data]\npower = \"p.csv\"\n", Path::new("/data/run")).unwrap();
        assert_eq!(cfg.data.power, PathBuf::from("/data/run/p.csv"));
        assert_eq!(cfg.data.hrv_path(709), PathBuf::from("/data/run/hrv_709.hrv"));
    }

    #[test]
    fn grids_expand() {
        let mut g = GridConfig::default();
        assert_eq!(g.build(&[1, 2]).unwrap().len(), 10);
        g.grid = GridKind::Custom;
        assert!(g.build(&[1]).is_err());
        g.cells.push(CustomCell {
            training_days: 7,
            patch_px: 2,
            kernel: "matern32() + whitenoise()".into(),
            horizon: Horizon::Hours4,
            cloud_mode: CloudMode::Persistence,
        });
        let c = g.build(&[1]).unwrap();
        assert_eq!(c[0].forecast_start, TimeIndex(30 * 288 + 120));
    }

    #[test]
    fn boundary_polygon_parses() {
        let cfg = RunConfig::from_toml(
            "[boundary]\nkind = \"polygon\"\nvertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]\n",
            Path::new("."),
        )
        .unwrap();
        assert!(matches!(cfg.boundary, Boundary::Polygon { .. }));
    }
}
