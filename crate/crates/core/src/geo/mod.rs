//! Geodetic projection, solar geometry and time indexing.

pub mod projection;
pub mod solar;
pub mod time;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use projection::{latlon_to_tm, tm_to_latlon, TmParams};
pub use time::{
    index_to_timestamp, midnight_epoch, timestamp_to_index, TimeIndex, STEPS_PER_DAY, STEPS_PER_HOUR, STEP_SECONDS,
};

use crate::error::{Error, Result};

/// A location in both geographic degrees and projected metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub easting: f64,
    pub northing: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64, params: &TmParams) -> Result<Self> {
        let (easting, northing) = latlon_to_tm(latitude, longitude, params)?;
        Ok(GeoPoint {
            latitude,
            longitude,
            easting,
            northing,
        })
    }
}

pub fn solar_elevation(point: &GeoPoint, t: DateTime<Utc>) -> f64 {
    solar::solar_elevation_deg(point.latitude, point.longitude, t)
}

/// Region in projected coordinates that systems must fall inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Boundary {
    Box {
        min_easting: f64,
        max_easting: f64,
        min_northing: f64,
        max_northing: f64,
    },
    /// Closed ring of `[easting, northing]` vertices.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Default for Boundary {
    /// Extent of the British National Grid.
    fn default() -> Self {
        Boundary::Box {
            min_easting: 0.0,
            max_easting: 700_000.0,
            min_northing: 0.0,
            max_northing: 1_300_000.0,
        }
    }
}

impl Boundary {
    pub fn validate(&self) -> Result<()> {
        match self {
            Boundary::Box {
                min_easting,
                max_easting,
                min_northing,
                max_northing,
            } if min_easting < max_easting && min_northing < max_northing => Ok(()),
            Boundary::Polygon { vertices } if vertices.len() >= 3 => Ok(()),
            _ => Err(Error::Config(format!("degenerate boundary {self:?}"))),
        }
    }

    pub fn contains(&self, easting: f64, northing: f64) -> bool {
        match self {
            Boundary::Box {
                min_easting,
                max_easting,
                min_northing,
                max_northing,
            } => {
                (*min_easting..=*max_easting).contains(&easting)
                    && (*min_northing..=*max_northing).contains(&northing)
            }
            Boundary::Polygon { vertices } => {
                // even-odd ray cast
                let mut inside = false;
                let n = vertices.len();
                for i in 0..n {
                    let [xi, yi] = vertices[i];
                    let [xj, yj] = vertices[(i + n - 1) % n];
                    if (yi > northing) != (yj > northing)
                        && easting < (xj - xi) * (northing - yi) / (yj - yi) + xi
                    {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn london_is_inside_default_boundary() {
        let p = GeoPoint::new(51.5, -0.12, &TmParams::default()).unwrap();
        assert!(Boundary::default().contains(p.easting, p.northing));
        let far = GeoPoint::new(52.0, 30.0, &TmParams::default()).unwrap();
        assert!(!Boundary::default().contains(far.easting, far.northing));
    }

    #[test]
    fn polygon_contains() {
        let b = Boundary::Polygon {
            vertices: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
        };
        assert!(b.contains(5.0, 5.0));
        assert!(!b.contains(15.0, 5.0));
        assert!(b.validate().is_ok());
    }
}
