//! HRV raster stacks and patch averaging.
//!
//! Grid geometry: `origin_*` is the upper-left corner of pixel (0, 0).
//! Pixel `(px, py)` spans eastings `[ox + px·s, ox + (px+1)·s)` and
//! northings `(oy - (py+1)·s, oy - py·s]`; rows run north to south.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{index_to_timestamp, timestamp_to_index, TimeIndex};
use crate::pipeline::PvSystem;

pub const MAGIC: &[u8; 4] = b"HRV1";
/// Default sensor maximum used to normalize raw pixel values.
pub const DEFAULT_SENSOR_MAX: f64 = 1023.0;
pub const DEFAULT_PIXEL_SIZE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HrvFrame {
    pub time: TimeIndex,
    /// Row-major, `width * height` values.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterGeometry {
    pub origin_easting: f64,
    pub origin_northing: f64,
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
}

fn default_pixel_size() -> f64 {
    DEFAULT_PIXEL_SIZE
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrvRasterStack {
    pub geometry: RasterGeometry,
    pub width: usize,
    pub height: usize,
    frames: Vec<HrvFrame>,
}

impl HrvRasterStack {
    pub fn new(geometry: RasterGeometry, width: usize, height: usize, frames: Vec<HrvFrame>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidInput(format!("HRV stack: {m}")));
        if !(geometry.pixel_size.is_finite() && geometry.pixel_size > 0.0) {
            return bad(format!("pixel size {} must be > 0", geometry.pixel_size));
        }
        if !(geometry.origin_easting.is_finite() && geometry.origin_northing.is_finite()) {
            return bad("non-finite origin".into());
        }
        if width == 0 || height == 0 {
            return bad("empty raster".into());
        }
        for (k, f) in frames.iter().enumerate() {
            if f.values.len() != width * height {
                return bad(format!("frame {k} has {} values, expected {}", f.values.len(), width * height));
            }
            if let Some(v) = f.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return bad(format!("frame {k} has invalid pixel value {v}"));
            }
            if k > 0 && f.time <= frames[k - 1].time {
                return bad(format!("frame times not strictly increasing at frame {k}"));
            }
        }
        Ok(HrvRasterStack {
            geometry,
            width,
            height,
            frames,
        })
    }

    pub fn frames(&self) -> &[HrvFrame] {
        &self.frames
    }

    pub fn frame(&self, t: TimeIndex) -> Option<&[f32]> {
        self.frames
            .binary_search_by_key(&t, |f| f.time)
            .ok()
            .map(|k| self.frames[k].values.as_slice())
    }

    pub fn has_frame(&self, t: TimeIndex) -> bool {
        self.frame(t).is_some()
    }

    /// Pixel containing a projected point (may lie outside the raster).
    pub fn pixel_of(&self, easting: f64, northing: f64) -> (i64, i64) {
        let g = &self.geometry;
        (
            ((easting - g.origin_easting) / g.pixel_size).floor() as i64,
            ((g.origin_northing - northing) / g.pixel_size).floor() as i64,
        )
    }

    /// Pixel window `[start, end]` of an `size`-wide patch around `p`.
    pub fn patch_window(p: i64, size: usize) -> (i64, i64) {
        let half = (size / 2) as i64;
        (p - half, p + half - 1)
    }

    pub fn patch_fits(&self, easting: f64, northing: f64, size: usize) -> bool {
        let (px, py) = self.pixel_of(easting, northing);
        let (x0, x1) = Self::patch_window(px, size);
        let (y0, y1) = Self::patch_window(py, size);
        x0 >= 0 && y0 >= 0 && x1 < self.width as i64 && y1 < self.height as i64
    }
}

/// Mean raw HRV over the patch around `system` at `t`, divided by
/// `sensor_max` and clipped to [0, 1].
///
/// The window is `[p - s/2, p + s/2 - 1]` on both axes, so for even
/// sizes it leans up and to the left of the system's pixel.
pub fn hrv_patch_mean(
    stack: &HrvRasterStack,
    system: &PvSystem,
    patch_px: usize,
    t: TimeIndex,
    sensor_max: f64,
) -> Result<f64> {
    if patch_px < 2 || !patch_px.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("patch size {patch_px} must be even and >= 2")));
    }
    let (e, n) = (system.location.easting, system.location.northing);
    let (px, py) = stack.pixel_of(e, n);
    if !stack.patch_fits(e, n, patch_px) {
        return Err(Error::Coverage {
            size: patch_px,
            px,
            py,
            width: stack.width,
            height: stack.height,
        });
    }
    let values = stack.frame(t).ok_or(Error::MissingFrame(t.value()))?;
    Ok(patch_mean_at(values, stack.width, px, py, patch_px, sensor_max))
}

pub(crate) fn patch_mean_at(values: &[f32], width: usize, px: i64, py: i64, size: usize, sensor_max: f64) -> f64 {
    let (x0, x1) = HrvRasterStack::patch_window(px, size);
    let (y0, y1) = HrvRasterStack::patch_window(py, size);
    let mut sum = 0.0f64;
    for y in y0..=y1 {
        let row = y as usize * width;
        for x in x0..=x1 {
            sum += f64::from(values[row + x as usize]);
        }
    }
    (sum / (size * size) as f64 / sensor_max).clamp(0.0, 1.0)
}

pub fn load_hrv(path: &Path, epoch: DateTime<Utc>) -> Result<HrvRasterStack> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_hrv(BufReader::new(file), epoch).map_err(|e| match e {
        Error::InvalidInput(m) => Error::parse(path, m),
        other => other,
    })
}

/// Decode the binary `HRV1` container.
pub fn read_hrv<R: Read>(mut r: R, epoch: DateTime<Utc>) -> Result<HrvRasterStack> {
    let trunc = |e: std::io::Error| Error::InvalidInput(format!("truncated HRV container: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(trunc)?;
    if &magic != MAGIC {
        return Err(Error::InvalidInput("missing HRV1 magic bytes".into()));
    }
    let origin_easting = r.read_f64::<LittleEndian>().map_err(trunc)?;
    let origin_northing = r.read_f64::<LittleEndian>().map_err(trunc)?;
    let pixel_size = r.read_f64::<LittleEndian>().map_err(trunc)?;
    let width = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let height = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let secs = r.read_i64::<LittleEndian>().map_err(trunc)?;
        let t = Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| Error::InvalidInput(format!("bad frame timestamp {secs}")))?;
        let mut values = vec![0f32; width * height];
        r.read_f32_into::<LittleEndian>(&mut values).map_err(trunc)?;
        frames.push(HrvFrame {
            time: timestamp_to_index(t, epoch)?,
            values,
        });
    }
    HrvRasterStack::new(
        RasterGeometry {
            origin_easting,
            origin_northing,
            pixel_size,
        },
        width,
        height,
        frames,
    )
}

pub fn write_hrv<W: Write>(mut w: W, stack: &HrvRasterStack, epoch: DateTime<Utc>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_f64::<LittleEndian>(stack.geometry.origin_easting)?;
    w.write_f64::<LittleEndian>(stack.geometry.origin_northing)?;
    w.write_f64::<LittleEndian>(stack.geometry.pixel_size)?;
    w.write_u32::<LittleEndian>(stack.width as u32)?;
    w.write_u32::<LittleEndian>(stack.height as u32)?;
    w.write_u32::<LittleEndian>(stack.frames.len() as u32)?;
    for f in &stack.frames {
        w.write_i64::<LittleEndian>(index_to_timestamp(f.time, epoch).timestamp())?;
        for &v in &f.values {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn save_hrv(path: &Path, stack: &HrvRasterStack, epoch: DateTime<Utc>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_hrv(&mut w, stack, epoch).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV fallback with header `t,px,py,value`; `t` is an RFC 3339 timestamp
/// or integer epoch seconds. Raster size is inferred from the largest
/// pixel indices; every frame must be complete.
pub fn read_hrv_csv<R: Read>(
    reader: R,
    source: &str,
    geometry: RasterGeometry,
    epoch: DateTime<Utc>,
) -> Result<HrvRasterStack> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(source, format!("line 1: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["t", "px", "py", "value"] {
        return Err(Error::parse(source, "line 1: expected header `t,px,py,value`"));
    }
    let mut cells = Vec::new();
    let (mut w, mut h) = (0usize, 0usize);
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let bad = |m: String| Error::parse(source, format!("line {line}: {m}"));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let t = match rec[0].parse::<i64>() {
            Ok(secs) => Utc.timestamp_opt(secs, 0).single(),
            Err(_) => crate::pipeline::power::parse_timestamp(&rec[0]),
        }
        .ok_or_else(|| bad(format!("bad time `{}`", &rec[0])))?;
        let t = timestamp_to_index(t, epoch).map_err(|e| bad(e.to_string()))?;
        let px: usize = rec[1].parse().map_err(|_| bad(format!("bad px `{}`", &rec[1])))?;
        let py: usize = rec[2].parse().map_err(|_| bad(format!("bad py `{}`", &rec[2])))?;
        let v: f32 = rec[3].parse().map_err(|_| bad(format!("bad value `{}`", &rec[3])))?;
        w = w.max(px + 1);
        h = h.max(py + 1);
        cells.push((t, px, py, v));
    }
    cells.sort_by_key(|c| c.0);
    let mut frames: Vec<(HrvFrame, usize)> = Vec::new();
    for (t, px, py, v) in cells {
        if frames.last().is_none_or(|(f, _)| f.time != t) {
            frames.push((
                HrvFrame {
                    time: t,
                    values: vec![f32::NAN; w * h],
                },
                0,
            ));
        }
        let (frame, filled) = frames.last_mut().expect("pushed above");
        let slot = &mut frame.values[py * w + px];
        if !slot.is_nan() {
            return Err(Error::parse(source, format!("duplicate pixel ({px}, {py}) at t={t}")));
        }
        *slot = v;
        *filled += 1;
    }
    for (f, filled) in &frames {
        if *filled != w * h {
            return Err(Error::parse(source, format!("frame t={} is missing pixels", f.time)));
        }
    }
    HrvRasterStack::new(geometry, w, h, frames.into_iter().map(|(f, _)| f).collect())
        .map_err(|e| Error::parse(source, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, TmParams};

    fn system_at(e: f64, n: f64) -> PvSystem {
        PvSystem {
            system_id: 1,
            location: GeoPoint {
                latitude: 0.0,
                longitude: 0.0,
                easting: e,
                northing: n,
            },
            capacity_w: 1000.0,
            provenance: String::new(),
        }
    }

    fn geometry() -> RasterGeometry {
        RasterGeometry {
            origin_easting: 0.0,
            origin_northing: 10_000.0,
            pixel_size: 1000.0,
        }
    }

    #[test]
    fn uniform_raster_gives_normalized_value() {
        let stack = HrvRasterStack::new(geometry(), 10, 10, vec![HrvFrame { time: TimeIndex(0), values: vec![300.0; 100] }]).unwrap();
        let s = system_at(5500.0, 4500.0);
        for size in [2, 6] {
            let v = hrv_patch_mean(&stack, &s, size, TimeIndex(0), 1023.0).unwrap();
            assert!((v - 300.0 / 1023.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_half_covered() {
        // System in pixel (1, 1); the 2x2 window is columns 0..=1, rows 0..=1.
        let mut values = vec![0.0f32; 9];
        values[0] = 1023.0; // (0, 0)
        values[3] = 1023.0; // (0, 1)
        let stack = HrvRasterStack::new(
            RasterGeometry { origin_easting: 0.0, origin_northing: 3000.0, pixel_size: 1000.0 },
            3,
            3,
            vec![HrvFrame { time: TimeIndex(0), values }],
        )
        .unwrap();
        let v = hrv_patch_mean(&stack, &system_at(1500.0, 1500.0), 2, TimeIndex(0), 1023.0).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn edge_and_missing_frame_errors() {
        let stack = HrvRasterStack::new(geometry(), 10, 10, vec![HrvFrame { time: TimeIndex(0), values: vec![1.0; 100] }]).unwrap();
        let near_edge = system_at(500.0, 9500.0);
        assert!(matches!(
            hrv_patch_mean(&stack, &near_edge, 6, TimeIndex(0), 1023.0),
            Err(Error::Coverage { .. })
        ));
        let inside = system_at(5500.0, 4500.0);
        assert!(matches!(
            hrv_patch_mean(&stack, &inside, 2, TimeIndex(1), 1023.0),
            Err(Error::MissingFrame(1))
        ));
    }

    #[test]
    fn stack_validation() {
        let f = |t: i64| HrvFrame { time: TimeIndex(t), values: vec![0.0; 4] };
        assert!(HrvRasterStack::new(geometry(), 2, 2, vec![f(1), f(1)]).is_err());
        assert!(HrvRasterStack::new(geometry(), 2, 2, vec![HrvFrame { time: TimeIndex(0), values: vec![-1.0; 4] }]).is_err());
        assert!(HrvRasterStack::new(geometry(), 2, 3, vec![f(0)]).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let epoch = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
        let frames = (0..3)
            .map(|t| HrvFrame { time: TimeIndex(t * 2), values: (0..6).map(|v| (v * t) as f32 + 0.5).collect() })
            .collect();
        let stack = HrvRasterStack::new(geometry(), 3, 2, frames).unwrap();
        let mut buf = Vec::new();
        write_hrv(&mut buf, &stack, epoch).unwrap();
        assert_eq!(&buf[..4], b"HRV1");
        assert_eq!(buf.len(), 4 + 24 + 12 + 3 * (8 + 6 * 4));
        assert_eq!(read_hrv(buf.as_slice(), epoch).unwrap(), stack);
        assert!(read_hrv(&buf[..buf.len() - 1], epoch).is_err());
    }

    #[test]
    fn csv_fallback() {
        let epoch = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
        let text = "t,px,py,value\n2021-06-01T00:05:00Z,0,0,1\n2021-06-01T00:05:00Z,1,0,2\n1622505600,0,0,3\n1622505600,1,0,4\n";
        let s = read_hrv_csv(text.as_bytes(), "h.csv", geometry(), epoch).unwrap();
        assert_eq!((s.width, s.height), (2, 1));
        assert_eq!(s.frame(TimeIndex(0)).unwrap(), &[3.0, 4.0]);
        assert_eq!(s.frame(TimeIndex(1)).unwrap(), &[1.0, 2.0]);
        let missing = "t,px,py,value\n0,0,0,1\n0,1,1,1\n";
        assert!(read_hrv_csv(missing.as_bytes(), "h.csv", geometry(), Utc.timestamp_opt(0, 0).unwrap()).is_err());
    }

    #[test]
    fn projected_system_lands_in_expected_pixel() {
        let p = GeoPoint::new(51.5, -1.0, &TmParams::default()).unwrap();
        let g = RasterGeometry {
            origin_easting: (p.easting / 1000.0).floor() * 1000.0 - 12_000.0,
            origin_northing: (p.northing / 1000.0).floor() * 1000.0 + 13_000.0,
            pixel_size: 1000.0,
        };
        let stack = HrvRasterStack::new(g, 24, 24, vec![]).unwrap();
        assert_eq!(stack.pixel_of(p.easting, p.northing), (12, 12));
        assert!(stack.patch_fits(p.easting, p.northing, 12));
    }
}
