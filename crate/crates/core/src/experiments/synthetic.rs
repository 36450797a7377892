//! Seeded synthetic PV power and HRV data.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{index_to_timestamp, solar_elevation, TimeIndex, STEPS_PER_DAY};
use crate::pipeline::{HrvFrame, HrvRasterStack, PowerSeries, PvSystem, RasterGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ClearSky,
    Overcast,
    Scattered,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::ClearSky => "clear-sky",
            Scenario::Overcast => "overcast",
            Scenario::Scattered => "scattered",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear-sky" => Ok(Scenario::ClearSky),
            "overcast" => Ok(Scenario::Overcast),
            "scattered" => Ok(Scenario::Scattered),
            _ => Err(Error::InvalidInput(format!("unknown scenario `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Fraction of clear-sky power removed by full cloud cover.
    pub attenuation: f64,
    /// Raw HRV of a clear sky.
    pub hrv_baseline: f64,
    /// Raw HRV of full cloud cover.
    pub hrv_cloud: f64,
    /// Square raster side in pixels; the system sits at its centre pixel.
    pub raster_size: usize,
    pub pixel_size: f64,
    /// Per-pixel Gaussian noise on raw HRV in the scattered scenario.
    pub hrv_noise_sd: f64,
    pub overcast_fraction: f64,
    /// Chance that a scattered-cloud segment is clear.
    pub clear_probability: f64,
    pub min_segment_steps: usize,
    pub max_segment_steps: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            attenuation: 0.9,
            hrv_baseline: 200.0,
            hrv_cloud: 900.0,
            raster_size: 24,
            pixel_size: 1000.0,
            hrv_noise_sd: 10.0,
            overcast_fraction: 1.0,
            clear_probability: 0.35,
            min_segment_steps: 3,
            max_segment_steps: 12,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.attenuation)
            && (0.0..=1.0).contains(&self.overcast_fraction)
            && (0.0..=1.0).contains(&self.clear_probability)
            && self.hrv_baseline >= 0.0
            && self.hrv_cloud >= self.hrv_baseline
            && self.raster_size >= 12
            && self.pixel_size > 0.0
            && self.hrv_noise_sd >= 0.0
            && self.min_segment_steps >= 1
            && self.max_segment_steps >= self.min_segment_steps;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub power: PowerSeries,
    pub stack: HrvRasterStack,
    /// Cloud fraction per time step.
    pub cloud: Vec<f64>,
    /// Power the system would produce under a clear sky.
    pub clear_sky: Vec<f64>,
}

/// Raster geometry that puts `system` in pixel `(size/2, size/2)`.
pub fn centred_geometry(system: &PvSystem, size: usize, pixel: f64) -> RasterGeometry {
    let c = (size / 2) as f64;
    RasterGeometry {
        origin_easting: (system.location.easting / pixel).floor() * pixel - c * pixel,
        origin_northing: (system.location.northing / pixel).ceil() * pixel + c * pixel,
        pixel_size: pixel,
    }
}

/// `days` of 5-minute power and HRV data for `system` starting at `epoch`.
pub fn generate_synthetic(
    scenario: Scenario,
    days: usize,
    system: &PvSystem,
    epoch: DateTime<Utc>,
    seed: u64,
    params: &SynthParams,
) -> Result<SyntheticData> {
    if days == 0 {
        return Err(Error::InvalidInput("synthetic data needs at least one day".into()));
    }
    params.validate()?;
    let steps = days * STEPS_PER_DAY as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cloud: Vec<f64> = match scenario {
        Scenario::ClearSky => vec![0.0; steps],
        Scenario::Overcast => vec![params.overcast_fraction; steps],
        Scenario::Scattered => {
            let mut c = Vec::with_capacity(steps);
            while c.len() < steps {
                let len = rng.gen_range(params.min_segment_steps..=params.max_segment_steps);
                let v = if rng.gen_bool(params.clear_probability) {
                    0.0
                } else {
                    rng.gen_range(0.2..=1.0)
                };
                c.extend(std::iter::repeat_n(v, len));
            }
            c.truncate(steps);
            c
        }
    };

    let n_px = params.raster_size * params.raster_size;
    let noise = Normal::new(0.0, params.hrv_noise_sd.max(f64::MIN_POSITIVE)).expect("sd checked");
    let noisy = scenario == Scenario::Scattered && params.hrv_noise_sd > 0.0;
    let mut power = PowerSeries::new();
    let mut clear_sky = Vec::with_capacity(steps);
    let mut frames = Vec::with_capacity(steps);
    for (k, &c) in cloud.iter().enumerate() {
        let t = TimeIndex(k as i64);
        let elev = solar_elevation(&system.location, index_to_timestamp(t, epoch));
        let clear = system.capacity_w * elev.to_radians().sin().max(0.0);
        clear_sky.push(clear);
        power.insert(t, clear * (1.0 - params.attenuation * c));
        let raw = params.hrv_baseline + c * (params.hrv_cloud - params.hrv_baseline);
        let values = if noisy {
            (0..n_px).map(|_| (raw + noise.sample(&mut rng)).max(0.0) as f32).collect()
        } else {
            vec![raw as f32; n_px]
        };
        frames.push(HrvFrame { time: t, values });
    }
    let geometry = centred_geometry(system, params.raster_size, params.pixel_size);
    let stack = HrvRasterStack::new(geometry, params.raster_size, params.raster_size, frames)?;
    Ok(SyntheticData {
        power,
        stack,
        cloud,
        clear_sky,
    })
}
