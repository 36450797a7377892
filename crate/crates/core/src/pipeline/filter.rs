//! System-level quality filters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geo::{index_to_timestamp, solar_elevation, Boundary};
use crate::pipeline::{MetadataLoad, PowerData, PvSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RemovalReason {
    MissingMetadata,
    OutOfBounds,
    OvernightGeneration,
    NoPowerData,
}

impl RemovalReason {
    pub fn code(self) -> &'static str {
        match self {
            RemovalReason::MissingMetadata => "missing-metadata",
            RemovalReason::OutOfBounds => "out-of-bounds",
            RemovalReason::OvernightGeneration => "overnight-generation",
            RemovalReason::NoPowerData => "no-power-data",
        }
    }
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovedSystem {
    pub system_id: i64,
    pub reason: RemovalReason,
    pub detail: String,
}

/// Thresholds for the overnight-generation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NightThreshold {
    /// Solar elevation (degrees) below which it counts as night.
    pub elevation_deg: f64,
    /// Fraction of capacity above which a night reading is suspicious.
    pub capacity_fraction: f64,
    /// Distinct nights with suspicious readings needed for removal.
    pub min_nights: usize,
}

impl Default for NightThreshold {
    fn default() -> Self {
        NightThreshold {
            elevation_deg: -5.0,
            capacity_fraction: 0.01,
            min_nights: 3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<PvSystem>,
    pub removed: Vec<RemovedSystem>,
    /// Power-series ids with no metadata row at all; not systems, so not
    /// counted as removals.
    pub orphan_power_ids: Vec<i64>,
}

impl FilterOutcome {
    pub fn removed_count(&self, reason: RemovalReason) -> usize {
        self.removed.iter().filter(|r| r.reason == reason).count()
    }
}

/// Local-solar-day key so one night never straddles two keys.
fn night_key(unix_secs: i64, longitude: f64) -> i64 {
    ((unix_secs as f64 + longitude * 240.0 + 43_200.0) / 86_400.0).floor() as i64
}

/// Count distinct nights on which `system` reported more than the
/// threshold fraction of its capacity while the sun was below the
/// night elevation.
pub fn overnight_nights(system: &PvSystem, power: &PowerData, threshold: &NightThreshold) -> usize {
    let Some(series) = power.get(system.system_id) else {
        return 0;
    };
    let limit = threshold.capacity_fraction * system.capacity_w;
    let mut nights = BTreeSet::new();
    for (&t, &p) in series {
        if p <= limit {
            continue;
        }
        let ts = index_to_timestamp(t, power.epoch);
        if solar_elevation(&system.location, ts) < threshold.elevation_deg {
            nights.insert(night_key(ts.timestamp(), system.location.longitude));
        }
    }
    nights.len()
}

/// Split metadata into kept systems and removals. Each removed system
/// carries the first failing check in the order: missing metadata, out of
/// bounds, overnight generation, no power data.
pub fn filter_systems(
    metadata: &MetadataLoad,
    power: &PowerData,
    boundary: &Boundary,
    threshold: &NightThreshold,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    let mut seen = BTreeSet::new();

    for s in &metadata.systems {
        if !seen.insert(s.system_id) {
            out.removed.push(RemovedSystem {
                system_id: s.system_id,
                reason: RemovalReason::MissingMetadata,
                detail: format!("duplicate metadata row at {}", s.provenance),
            });
            continue;
        }
        let (e, n) = (s.location.easting, s.location.northing);
        if !boundary.contains(e, n) {
            out.removed.push(RemovedSystem {
                system_id: s.system_id,
                reason: RemovalReason::OutOfBounds,
                detail: format!("({e:.1}, {n:.1}) outside boundary"),
            });
            continue;
        }
        let nights = overnight_nights(s, power, threshold);
        if nights >= threshold.min_nights {
            out.removed.push(RemovedSystem {
                system_id: s.system_id,
                reason: RemovalReason::OvernightGeneration,
                detail: format!("generation at night on {nights} nights"),
            });
            continue;
        }
        if power.get(s.system_id).is_none_or(|p| p.is_empty()) {
            out.removed.push(RemovedSystem {
                system_id: s.system_id,
                reason: RemovalReason::NoPowerData,
                detail: "no power readings".into(),
            });
            continue;
        }
        out.kept.push(s.clone());
    }

    let mut skipped: BTreeMap<i64, &str> = BTreeMap::new();
    for row in &metadata.skipped {
        if let Some(id) = row.system_id {
            skipped.entry(id).or_insert(&row.reason);
        }
    }
    for (id, reason) in skipped {
        if seen.insert(id) {
            out.removed.push(RemovedSystem {
                system_id: id,
                reason: RemovalReason::MissingMetadata,
                detail: reason.to_string(),
            });
        }
    }

    out.orphan_power_ids = power.series.keys().copied().filter(|id| !seen.contains(id)).collect();
    out
}
