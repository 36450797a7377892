//! Join power readings with HRV patch means into model-ready series.

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::geo::TimeIndex;
use crate::gp::{Inputs, TrainingSet};
use crate::pipeline::hrv::{hrv_patch_mean, HrvRasterStack};
use crate::pipeline::{PowerSeries, PvSystem};

/// Readings above this multiple of capacity are clipped.
pub const OVERRATE_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: TimeIndex,
    /// Normalized patch mean in [0, 1].
    pub hrv: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSeries {
    pub system: PvSystem,
    pub epoch: DateTime<Utc>,
    pub patch_px: usize,
    pub rows: Vec<SeriesRow>,
    /// Time indices in the window present on one side of the join only.
    pub gaps: usize,
}

impl AssembledSeries {
    pub fn system_id(&self) -> i64 {
        self.system.system_id
    }

    pub fn capacity_w(&self) -> f64 {
        self.system.capacity_w
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows with `start <= t < end`.
    pub fn window(&self, start: TimeIndex, end: TimeIndex) -> &[SeriesRow] {
        let a = self.rows.partition_point(|r| r.t < start);
        let b = self.rows.partition_point(|r| r.t < end);
        &self.rows[a..b]
    }

    pub fn row_at(&self, t: TimeIndex) -> Option<&SeriesRow> {
        self.rows.binary_search_by_key(&t, |r| r.t).ok().map(|k| &self.rows[k])
    }
}

/// Model inputs `[t, hrv]` for a run of rows.
pub fn rows_to_inputs(rows: &[SeriesRow]) -> Inputs {
    let data = rows.iter().flat_map(|r| [r.t.value() as f64, r.hrv]).collect();
    Inputs::new(2, data).expect("two columns per row")
}

pub fn rows_to_training_set(rows: &[SeriesRow]) -> Result<TrainingSet> {
    TrainingSet::new(rows_to_inputs(rows), rows.iter().map(|r| r.power_w).collect())
}

/// Inner join over `[start, end)`. Time indices present on only one
/// side are dropped and counted in `gaps`.
pub fn assemble(
    system: &PvSystem,
    power: &PowerSeries,
    epoch: DateTime<Utc>,
    stack: &HrvRasterStack,
    patch_px: usize,
    sensor_max: f64,
    window: (TimeIndex, TimeIndex),
) -> Result<AssembledSeries> {
    let (start, end) = window;
    let empty = || Error::EmptyDataset {
        system_id: system.system_id,
        start: start.value(),
        end: end.value(),
    };
    if end <= start {
        return Err(empty());
    }
    let (e, n) = (system.location.easting, system.location.northing);
    if !stack.patch_fits(e, n, patch_px) {
        let (px, py) = stack.pixel_of(e, n);
        return Err(Error::Coverage {
            size: patch_px,
            px,
            py,
            width: stack.width,
            height: stack.height,
        });
    }

    let cap = system.capacity_w * OVERRATE_FACTOR;
    let mut rows = Vec::new();
    let mut gaps = 0;
    for (&t, &p) in power.range(start..end) {
        if stack.has_frame(t) {
            rows.push(SeriesRow {
                t,
                hrv: hrv_patch_mean(stack, system, patch_px, t, sensor_max)?,
                power_w: p.clamp(0.0, cap),
            });
        } else {
            gaps += 1;
        }
    }
    gaps += stack
        .frames()
        .iter()
        .filter(|f| f.time >= start && f.time < end && !power.contains_key(&f.time))
        .count();
    if rows.is_empty() {
        return Err(empty());
    }
    Ok(AssembledSeries {
        system: system.clone(),
        epoch,
        patch_px,
        rows,
        gaps,
    })
}
