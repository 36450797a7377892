use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, TmParams};

pub const METADATA_HEADER: [&str; 4] = ["system_id", "latitude", "longitude", "capacity_w"];

/// One PV installation.
#[derive(Debug, Clone, PartialEq)]
pub struct PvSystem {
    pub system_id: i64,
    pub location: GeoPoint,
    pub capacity_w: f64,
    /// `file:line` the record came from.
    pub provenance: String,
}

/// A metadata row that was not turned into a [`PvSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub line: usize,
    /// Parsed id when the id column itself was readable.
    pub system_id: Option<i64>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct MetadataLoad {
    pub systems: Vec<PvSystem>,
    pub skipped: Vec<SkippedRow>,
}

pub fn load_metadata(path: &Path, params: &TmParams) -> Result<MetadataLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_metadata(file, &path.display().to_string(), params)
}

/// Parse metadata CSV. Header problems are fatal; bad rows are skipped
/// and reported.
pub fn read_metadata<R: Read>(reader: R, source: &str, params: &TmParams) -> Result<MetadataLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(source, format!("line 1: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != METADATA_HEADER {
        return Err(Error::parse(
            source,
            format!("line 1: expected header `{}`", METADATA_HEADER.join(",")),
        ));
    }

    let mut out = MetadataLoad::default();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.skipped.push(SkippedRow {
                    line,
                    system_id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let field = |i: usize| rec.get(i).filter(|s| !s.is_empty());
        let system_id = field(0).and_then(|s| s.parse::<i64>().ok());
        let skip = |reason: String| SkippedRow {
            line,
            system_id,
            reason,
        };
        let Some(id) = system_id else {
            out.skipped.push(skip("missing or malformed system_id".into()));
            continue;
        };
        let num = |i: usize| -> std::result::Result<f64, String> {
            let name = METADATA_HEADER[i];
            let s = field(i).ok_or_else(|| format!("missing {name}"))?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("malformed {name} `{s}`"))
        };
        let parsed = (|| {
            let lat = num(1)?;
            let lon = num(2)?;
            let cap = num(3)?;
            if !(-90.0..=90.0).contains(&lat) {
                return Err(format!("latitude {lat} out of range [-90, 90]"));
            }
            if !(-180.0..=180.0).contains(&lon) {
                return Err(format!("longitude {lon} out of range [-180, 180]"));
            }
            if cap <= 0.0 {
                return Err(format!("capacity_w {cap} must be > 0"));
            }
            let location = GeoPoint::new(lat, lon, params).map_err(|e| e.to_string())?;
            Ok((location, cap))
        })();
        match parsed {
            Ok((location, capacity_w)) => out.systems.push(PvSystem {
                system_id: id,
                location,
                capacity_w,
                provenance: format!("{source}:{line}"),
            }),
            Err(reason) => out.skipped.push(skip(reason)),
        }
    }
    Ok(out)
}

pub fn write_metadata(path: &Path, systems: &[PvSystem]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", METADATA_HEADER.join(",")).map_err(io)?;
    for s in systems {
        writeln!(
            w,
            "{},{},{},{}",
            s.system_id, s.location.latitude, s.location.longitude, s.capacity_w
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
