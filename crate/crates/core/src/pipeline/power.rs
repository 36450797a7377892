use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::geo::{index_to_timestamp, midnight_epoch, timestamp_to_index, TimeIndex};

pub const POWER_HEADER: [&str; 3] = ["timestamp_utc", "system_id", "power_w"];

/// Per-system power readings keyed by time index.
pub type PowerSeries = BTreeMap<TimeIndex, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerData {
    /// Midnight UTC of the first day in the file; index 0.
    pub epoch: DateTime<Utc>,
    pub series: BTreeMap<i64, PowerSeries>,
}

impl PowerData {
    pub fn get(&self, system_id: i64) -> Option<&PowerSeries> {
        self.series.get(&system_id)
    }
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

pub fn load_power(path: &Path) -> Result<PowerData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_power(file, &path.display().to_string())
}

/// Parse power CSV. Any malformed row is an error naming its line.
pub fn read_power<R: Read>(reader: R, source: &str) -> Result<PowerData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(source, format!("line 1: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != POWER_HEADER {
        return Err(Error::parse(
            source,
            format!("line 1: expected header `{}`", POWER_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let bad = |msg: String| Error::parse(source, format!("line {line}: {msg}"));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let t = parse_timestamp(&rec[0]).ok_or_else(|| bad(format!("bad timestamp `{}`", &rec[0])))?;
        let id: i64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad system_id `{}`", &rec[1])))?;
        let p: f64 = rec[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("bad power_w `{}`", &rec[2])))?;
        rows.push((line, t, id, p));
    }
    let Some(first) = rows.iter().map(|r| r.1).min() else {
        return Err(Error::parse(source, "no power readings"));
    };
    let epoch = midnight_epoch(first);
    let mut series: BTreeMap<i64, PowerSeries> = BTreeMap::new();
    for (line, t, id, p) in rows {
        let idx = timestamp_to_index(t, epoch)
            .map_err(|e| Error::parse(source, format!("line {line}: {e}")))?;
        if series.entry(id).or_default().insert(idx, p).is_some() {
            return Err(Error::parse(
                source,
                format!("line {line}: duplicate reading for system {id} at {}", format_timestamp(t)),
            ));
        }
    }
    Ok(PowerData { epoch, series })
}

pub fn write_power(path: &Path, data: &PowerData) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", POWER_HEADER.join(",")).map_err(io)?;
    for (id, s) in &data.series {
        for (&t, p) in s {
            writeln!(w, "{},{},{}", format_timestamp(index_to_timestamp(t, data.epoch)), id, p).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
